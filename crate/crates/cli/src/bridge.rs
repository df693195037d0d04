//! Conversions between simulator networks and the dense reference.

use cenn_forge::templates::{MaxNeighborhood, PoolWindow};
use cenn_forge::{DownsampleMode, Grid, LayerOp, NetworkSpec, PoolKind};
use cenn_forge_oracle::{Downsample, Map, OracleLayer};

use crate::{CliError, CliResult};

pub fn to_map(g: &Grid) -> Map {
    (0..g.rows()).map(|r| (0..g.cols()).map(|c| g.get(r, c)).collect()).collect()
}

pub fn from_map(m: &Map) -> Grid {
    let rows: Vec<&[f64]> = m.iter().map(Vec::as_slice).collect();
    Grid::from_rows(&rows).expect("rectangular map")
}

fn downsample(d: Option<DownsampleMode>) -> Downsample {
    match d {
        None => Downsample::None,
        Some(DownsampleMode::Half) => Downsample::Half,
        Some(DownsampleMode::HalfFloor) => Downsample::HalfFloor,
    }
}

/// Dense layers computing what the network means, independent of how it is
/// lowered. Nonlinear pooling has no dense counterpart.
pub fn oracle_layers(net: &NetworkSpec) -> CliResult<Vec<OracleLayer>> {
    net.layers
        .iter()
        .map(|l| {
            Ok(match &l.op {
                LayerOp::Conv(w) => OracleLayer::Conv {
                    kernels: w.kernels.clone(),
                    bias: w.bias.clone(),
                },
                LayerOp::Relu(_) => OracleLayer::Relu,
                LayerOp::Pool { kind: PoolKind::MaxLinear, neighborhood, downsample: d, .. } => OracleLayer::MaxPool {
                    cross: *neighborhood == MaxNeighborhood::Cross,
                    downsample: downsample(*d),
                },
                LayerOp::Pool { kind: PoolKind::Avg, window, downsample: d, .. } => OracleLayer::AvgPool {
                    window3: *window == PoolWindow::W3x3,
                    downsample: downsample(*d),
                },
                LayerOp::Pool { kind: PoolKind::Nonlinear, .. } => {
                    return Err(CliError::Usage(format!("layer '{}': nonlinear pooling has no dense reference", l.name)))
                }
                LayerOp::Fc(w) => OracleLayer::Fc {
                    weights: w.weights.clone(),
                    bias: w.bias.clone(),
                },
            })
        })
        .collect()
}

/// Reference class scores for one image, summing conv inputs `group` maps at
/// a time as the program does.
pub fn oracle_scores(net: &NetworkSpec, layers: &[OracleLayer], image: &[Grid], group: usize) -> CliResult<Vec<f64>> {
    let input: Vec<Map> = image.iter().map(to_map).collect();
    let outs = cenn_forge_oracle::forward(layers, &input, group)
        .ok_or_else(|| CliError::Usage(format!("network '{}': reference cannot downsample an odd map", net.name)))?;
    Ok(cenn_forge_oracle::scores(&outs, net.has_fc()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design2_maps_layer_for_layer() {
        let net = NetworkSpec::preset("mnist_design2").unwrap();
        let layers = oracle_layers(&net).unwrap();
        assert_eq!(layers.len(), net.layers.len());
        assert!(matches!(layers[2], OracleLayer::MaxPool { cross: false, downsample: Downsample::Half }));
        assert!(matches!(layers[8], OracleLayer::MaxPool { downsample: Downsample::HalfFloor, .. }));
    }

    #[test]
    fn nonlinear_pooling_has_no_reference() {
        let net = NetworkSpec::preset("mnist_design1").unwrap().with_pool_kind(PoolKind::Nonlinear);
        assert!(oracle_layers(&net).unwrap_err().to_string().contains("pool1"));
    }

    #[test]
    fn maps_round_trip() {
        let m = vec![vec![0.5, -0.25], vec![1.0, 0.0]];
        assert_eq!(to_map(&from_map(&m)), m);
    }
}
