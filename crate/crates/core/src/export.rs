//! Kernel export as JSON or CSV, and the JSON reader.
//!
//! JSON holds `{spec, polarity, derivation, weights}` with `weights` nested
//! `[z][y][x]` for 3D kernels and `[y][x]` for 2D ones. CSV has the header
//! `x,y,z,weight` and one row per entry in storage order, with signed
//! offsets from the center (`z = 0` in 2D).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{BalancedKernel, KernelDerivation, KernelDims, KernelSpec, Polarity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NestedWeights {
    Two(Vec<Vec<f64>>),
    Three(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDocument {
    pub spec: KernelSpec,
    pub polarity: Polarity,
    pub derivation: KernelDerivation,
    pub weights: NestedWeights,
}

impl KernelDocument {
    pub fn from_kernel(kern: &BalancedKernel) -> Self {
        let k = kern.spec().k;
        let rows: Vec<Vec<f64>> = kern.weights().chunks(k).map(<[f64]>::to_vec).collect();
        let weights = match kern.spec().dims {
            KernelDims::Two => NestedWeights::Two(rows),
            KernelDims::Three => NestedWeights::Three(rows.chunks(k).map(<[_]>::to_vec).collect()),
        };
        Self {
            spec: *kern.spec(),
            polarity: kern.polarity(),
            derivation: *kern.derivation(),
            weights,
        }
    }

    pub fn into_kernel(self) -> Result<BalancedKernel> {
        let k = self.spec.k;
        let ragged = || Error::Dimension(format!("weights are not a {k}-sized grid"));
        let flat: Vec<f64> = match (self.spec.dims, self.weights) {
            (KernelDims::Two, NestedWeights::Two(rows)) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(ragged());
                }
                rows.into_iter().flatten().collect()
            }
            (KernelDims::Three, NestedWeights::Three(planes)) => {
                if planes.len() != k || planes.iter().any(|p| p.len() != k || p.iter().any(|r| r.len() != k)) {
                    return Err(ragged());
                }
                planes.into_iter().flatten().flatten().collect()
            }
            (dims, _) => {
                return Err(Error::Dimension(format!(
                    "weights nesting does not match dims = {}",
                    dims.rank()
                )))
            }
        };
        BalancedKernel::from_parts(self.spec, self.derivation, self.polarity, flat)
    }
}

pub fn kernel_to_json(kern: &BalancedKernel) -> Result<String> {
    serde_json::to_string_pretty(&KernelDocument::from_kernel(kern))
        .map_err(|e| Error::Config(format!("cannot encode kernel: {e}")))
}

pub fn kernel_from_json(text: &str) -> Result<BalancedKernel> {
    let doc: KernelDocument = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("cannot parse kernel JSON: {e}")))?;
    doc.into_kernel()
}

pub fn kernel_to_csv(kern: &BalancedKernel) -> String {
    let mut s = String::from("x,y,z,weight\n");
    for ([z, y, x], w) in kern.grid().offsets().into_iter().zip(kern.weights()) {
        let _ = writeln!(s, "{x},{y},{z},{w:?}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::make_kernel;

    #[test]
    fn json_round_trip_2d_and_3d() {
        for dims in [KernelDims::Two, KernelDims::Three] {
            let spec = KernelSpec::new(5, 2.0 / 3.0, 3.0, dims).unwrap();
            let kern = make_kernel(&spec, Polarity::Off).unwrap();
            let back = kernel_from_json(&kernel_to_json(&kern).unwrap()).unwrap();
            assert_eq!(back, kern);
        }
    }

    #[test]
    fn csv_rows() {
        let kern = make_kernel(&KernelSpec::preset(3).unwrap(), Polarity::On).unwrap();
        let csv = kernel_to_csv(&kern);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 28);
        assert_eq!(lines[0], "x,y,z,weight");
        assert!(lines[1].starts_with("-1,-1,-1,"));
        assert!(lines[14].starts_with("0,0,0,"));
    }

    #[test]
    fn mismatched_nesting_is_rejected() {
        let kern = make_kernel(&KernelSpec::preset(3).unwrap(), Polarity::On).unwrap();
        let mut doc = KernelDocument::from_kernel(&kern);
        doc.spec.dims = KernelDims::Two;
        assert!(doc.into_kernel().is_err());
    }
}
