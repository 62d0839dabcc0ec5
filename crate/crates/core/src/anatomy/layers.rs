use super::{transmural_depth, AnatomyError};
use crate::voxel::{DigitalTwin, Layer, TissueLabel};

/// ENDO below 1/3 of the wall, MID below 2/3, EPI above.
pub fn layer_for_depth(d: f64) -> Layer {
    if d < 1.0 / 3.0 {
        Layer::Endo
    } else if d < 2.0 / 3.0 {
        Layer::Mid
    } else {
        Layer::Epi
    }
}

pub fn assign_layers(twin: &DigitalTwin) -> Result<DigitalTwin, AnatomyError> {
    if !twin.grid.labels.iter().any(|l| l.is_myocardium()) {
        return Err(AnatomyError::NoWallFound);
    }
    let depth = transmural_depth(twin);
    let layers = twin
        .grid
        .labels
        .iter()
        .zip(&depth)
        .map(|(&label, &d)| {
            if label == TissueLabel::Outside {
                Layer::None
            } else {
                layer_for_depth(d)
            }
        })
        .collect();
    let mut out = twin.clone();
    out.layers = Some(layers);
    Ok(out)
}
