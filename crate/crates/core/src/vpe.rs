//! Visual prompt enhancement: check the segmenter's output against a
//! prototype built from web images of the answer, and replace it with the
//! best-matching detector proposal when the check fails.

use serde::{Deserialize, Serialize};

use crate::backends::{ObjectDetector, PromptableMaskGenerator, VisualEmbedder};
use crate::error::{Error, Result};
use crate::primitives::{cosine_similarity, normalize, BinaryMask, DetectedEntity, FeatureVector, RasterImage};

/// Default single-link merge threshold on cosine distance.
pub const DEFAULT_CLUSTER_DELTA: f64 = 0.3;
/// Default similarity a segmentation must reach to be kept.
pub const DEFAULT_VERIFY_THRESHOLD: f64 = 0.5;
/// Default similarity a proposal must reach to replace the segmentation.
pub const DEFAULT_ACCEPT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeFeature {
    /// Unit-norm mean direction of the supporting images.
    pub vector: FeatureVector,
    pub support_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub similarity: f64,
    pub passed: bool,
    pub threshold_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    /// Present exactly when `corrected`.
    #[serde(skip)]
    pub mask: Option<BinaryMask>,
    pub chosen_entity: Option<DetectedEntity>,
    pub best_similarity: f64,
    pub corrected: bool,
}

fn embed(vembedder: &dyn VisualEmbedder, image: &RasterImage) -> Result<FeatureVector> {
    let v = vembedder.embed(image)?;
    if v.dim() != vembedder.dim() {
        return Err(Error::contract(format!(
            "visual embedder returned dimension {} instead of {}",
            v.dim(),
            vembedder.dim()
        )));
    }
    normalize(&v)
}

fn embed_all(vembedder: &dyn VisualEmbedder, images: &[RasterImage]) -> Result<Vec<FeatureVector>> {
    use rayon::prelude::*;
    images.par_iter().map(|img| embed(vembedder, img)).collect()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Indices of the largest single-link cluster, ascending.
///
/// Two vectors are linked when their cosine distance is at most `delta`;
/// clusters are the connected components. Equal-size clusters are ranked by
/// their lowest member index.
pub fn largest_cluster_indices(vectors: &[FeatureVector], delta: f64) -> Result<Vec<usize>> {
    let n = vectors.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if 1.0 - cosine_similarity(&vectors[i], &vectors[j])? <= delta {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let root = find(&mut parent, i);
        members[root].push(i);
    }
    // members are grouped under their lowest index, so scanning roots in
    // order and keeping strictly larger groups implements the tie rule
    Ok(members.into_iter().fold(Vec::new(), |best, group| {
        if group.len() > best.len() {
            group
        } else {
            best
        }
    }))
}

/// Keep only the images of the largest visual cluster, in input order.
pub fn cluster_largest(
    images: &[RasterImage],
    vembedder: &dyn VisualEmbedder,
    delta: f64,
) -> Result<Vec<RasterImage>> {
    if images.is_empty() {
        return Err(Error::contract("cannot cluster an empty image list"));
    }
    let vectors = embed_all(vembedder, images)?;
    Ok(largest_cluster_indices(&vectors, delta)?
        .into_iter()
        .map(|i| images[i].clone())
        .collect())
}

/// Normalized mean of normalized vectors.
pub fn prototype_from_vectors(vectors: &[FeatureVector]) -> Result<PrototypeFeature> {
    let first = vectors.first().ok_or_else(|| Error::contract("prototype needs at least one vector"))?;
    let mut sum = vec![0.0; first.dim()];
    for v in vectors {
        if v.dim() != first.dim() {
            return Err(Error::contract("prototype vectors differ in dimension"));
        }
        for (s, x) in sum.iter_mut().zip(normalize(v)?.values()) {
            *s += x;
        }
    }
    let mean = FeatureVector::new(sum.into_iter().map(|s| s / vectors.len() as f64).collect())?;
    Ok(PrototypeFeature {
        vector: normalize(&mean).map_err(|_| Error::contract("prototype vectors cancel out"))?,
        support_count: vectors.len(),
    })
}

/// Prototype of the given images: the normalized mean of their embeddings.
pub fn make_prototype(images: &[RasterImage], vembedder: &dyn VisualEmbedder) -> Result<PrototypeFeature> {
    if images.is_empty() {
        return Err(Error::contract("prototype needs at least one image"));
    }
    prototype_from_vectors(&embed_all(vembedder, images)?)
}

/// Compare the masked foreground with the prototype. An empty mask scores −1.
pub fn verify_foreground(
    image: &RasterImage,
    mask: &BinaryMask,
    proto: &PrototypeFeature,
    vembedder: &dyn VisualEmbedder,
    tau_verify: f64,
) -> Result<VerificationReport> {
    if mask.shape() != image.shape() {
        return Err(Error::contract(format!(
            "mask shape {:?} does not match image shape {:?}",
            mask.shape(),
            image.shape()
        )));
    }
    let similarity = match mask.tight_box() {
        None => -1.0,
        Some(bbox) => cosine_similarity(&embed(vembedder, &image.crop(&bbox)?)?, &proto.vector)?,
    };
    Ok(VerificationReport {
        similarity,
        passed: similarity >= tau_verify,
        threshold_used: tau_verify,
    })
}

/// Score every detector proposal against the prototype and, when the best
/// reaches `tau`, prompt the mask generator with its box.
///
/// Ties prefer the larger box, then the earlier proposal.
pub fn correct_segmentation(
    image: &RasterImage,
    proto: &PrototypeFeature,
    detector: &dyn ObjectDetector,
    vembedder: &dyn VisualEmbedder,
    maskgen: &dyn PromptableMaskGenerator,
    tau: f64,
) -> Result<CorrectionResult> {
    use rayon::prelude::*;

    let (width, height) = (image.width(), image.height());
    let proposals: Vec<DetectedEntity> = detector
        .detect(image)?
        .into_iter()
        .filter(|d| d.bbox.fits(width, height))
        .collect();
    let scores: Vec<f64> = proposals
        .par_iter()
        .map(|p| cosine_similarity(&embed(vembedder, &image.crop(&p.bbox)?)?, &proto.vector))
        .collect::<Result<_>>()?;
    let best = (0..proposals.len()).reduce(|best, i| {
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best] && proposals[i].bbox.area() > proposals[best].bbox.area());
        if better {
            i
        } else {
            best
        }
    });
    let Some(best) = best else {
        return Ok(CorrectionResult {
            mask: None,
            chosen_entity: None,
            best_similarity: -1.0,
            corrected: false,
        });
    };
    let best_similarity = scores[best];
    let chosen = proposals[best].clone();
    if best_similarity < tau {
        return Ok(CorrectionResult {
            mask: None,
            chosen_entity: Some(chosen),
            best_similarity,
            corrected: false,
        });
    }
    let mask = maskgen.mask_from_box(image, &chosen.bbox)?;
    if mask.shape() != image.shape() {
        return Err(Error::contract("mask generator returned a mask of the wrong shape"));
    }
    Ok(CorrectionResult {
        mask: Some(mask),
        chosen_entity: Some(chosen),
        best_similarity,
        corrected: true,
    })
}
