use super::{ArchitectureSpec, FeedbackSpec, HeadKind, LayerKind, PipelineConfig, Source};
use crate::{Error, Result};

/// Sets the temporal extent of every layer. Kinds without a temporal
/// kernel only accept an extent of 1.
pub fn temporalize(arch: &ArchitectureSpec, extents: &[usize]) -> Result<ArchitectureSpec> {
    if extents.len() != arch.layers.len() {
        return Err(Error::config(format!(
            "{} temporal extents given for {} layers",
            extents.len(),
            arch.layers.len()
        )));
    }
    let mut out = arch.clone();
    for (l, &e) in out.layers.iter_mut().zip(extents) {
        if e == 0 {
            return Err(Error::config(format!("layer '{}': temporal extent must be ≥ 1", l.name)));
        }
        match l.kind {
            LayerKind::Conv | LayerKind::Maxpool | LayerKind::Avgpool | LayerKind::Dense => {
                l.kernel[0] = e
            }
            _ if e == 1 => {}
            _ => {
                return Err(Error::config(format!(
                    "layer '{}' ({:?}) has no temporal kernel",
                    l.name, l.kind
                )))
            }
        }
    }
    out.validate()?;
    Ok(out)
}

/// Extent `e` for every conv and dense layer except the first conv; other
/// layers keep their current extent.
pub fn default_temporal_extents(arch: &ArchitectureSpec, e: usize) -> Vec<usize> {
    let first_conv = arch.layers.iter().position(|l| l.kind == LayerKind::Conv);
    arch.layers
        .iter()
        .enumerate()
        .map(|(i, l)| match l.kind {
            LayerKind::Conv | LayerKind::Dense if Some(i) != first_conv => e,
            _ => l.temporal_extent(),
        })
        .collect()
}

/// Feeds the previous frame's head output into the first layer after the
/// first conv whose input resolution matches the head resolution.
pub fn add_feedback(arch: &ArchitectureSpec) -> Result<ArchitectureSpec> {
    if arch.feedback.is_some() {
        return Err(Error::validation("architecture already has feedback"));
    }
    if arch.head.kind != HeadKind::Dense {
        return Err(Error::validation(
            "feedback needs a dense prediction head; a classifier has no per-frame spatial output",
        ));
    }
    let topo = arch.resolve()?;
    let head_res = arch.head.resolution.expect("validated dense head");
    let first_conv = arch
        .layers
        .iter()
        .position(|l| l.kind == LayerKind::Conv)
        .ok_or_else(|| Error::validation("feedback needs a conv layer"))?;
    let target = (first_conv + 1..arch.layers.len())
        .find(|&i| {
            let s = topo.source_shape(topo.nodes[i].sources[0]);
            debug_assert!(topo.nodes[i].sources[0] != Source::Feedback);
            [s[1], s[2]] == head_res
        })
        .ok_or_else(|| {
            Error::validation("no layer after the first conv runs at the head resolution")
        })?;
    let mut out = arch.clone();
    out.feedback = Some(FeedbackSpec {
        target: arch.layers[target].name.clone(),
    });
    out.validate()?;
    Ok(out)
}

/// Applies the transforms a config asks for.
pub fn prepare(arch: &ArchitectureSpec, config: &PipelineConfig) -> Result<ArchitectureSpec> {
    let mut out = arch.clone();
    if config.temporalized {
        out = temporalize(&out, &default_temporal_extents(&out, 2))?;
    }
    match (config.feedback, out.feedback.is_some()) {
        (true, false) => out = add_feedback(&out)?,
        (false, true) => out.feedback = None,
        _ => {}
    }
    Ok(out)
}
