//! Model descriptions accepted in configs.
//!
//! Besides presets and the full serde form of [`NetworkSpec`], a model can
//! be written as a list of layer strings in the table vocabulary:
//!
//! ```text
//! FC d          dense layer with d units (the last FC is the classifier)
//! RP n FC d     dense layer on an n-dimensional random projection
//! hxh CONV c    h×h convolution with c output channels, same padding
//! hxh RP-I n CONV c / hxh RP-II n CONV c
//!               random-projection convolutions, approach I or II
//! hxh MP        h×h max pool, stride 2, same padding
//! BN, ReLU, FLATTEN
//! ```
//!
//! Items may be separated by commas inside one string. A flatten is
//! inserted before the first FC that sees an image.

use serde::{Deserialize, Serialize};

use crate::linalg::derive_seed;
use crate::nn::models::{self, Variant};
use crate::nn::{LayerSpec, NetworkSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    MnistFcnn,
    CifarFcnn,
    MnistCnn,
    CifarCnn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Preset {
        name: Preset,
        #[serde(default = "original")]
        variant: Variant,
    },
    Table {
        input_shape: Vec<usize>,
        layers: Vec<String>,
    },
    Spec(NetworkSpec),
}

fn original() -> Variant {
    Variant::Original
}

impl ModelConfig {
    /// Resolves to a network; projection seeds derive from `seed`.
    pub fn resolve(&self, seed: u64) -> Result<NetworkSpec, String> {
        match self {
            ModelConfig::Preset { name, variant } => {
                let ok = matches!(
                    (name, variant),
                    (_, Variant::Original)
                        | (Preset::MnistFcnn | Preset::CifarFcnn, Variant::RpDense { .. })
                        | (Preset::MnistCnn | Preset::CifarCnn, Variant::ApproachI { .. } | Variant::ApproachII { .. })
                );
                if !ok {
                    return Err(format!("variant {variant:?} does not apply to {name:?}"));
                }
                Ok(match name {
                    Preset::MnistFcnn => models::mnist_fcnn(*variant, seed),
                    Preset::CifarFcnn => models::cifar_fcnn(*variant, seed),
                    Preset::MnistCnn => models::mnist_cnn(*variant, seed),
                    Preset::CifarCnn => models::cifar_cnn(*variant, seed),
                })
            }
            ModelConfig::Table { input_shape, layers } => parse_table(input_shape, layers, seed),
            ModelConfig::Spec(spec) => Ok(spec.clone()),
        }
    }
}

fn window(tok: &str) -> Option<usize> {
    let (a, b) = tok.split_once(['x', 'X'])?;
    let (a, b) = (a.parse().ok()?, b.parse::<usize>().ok()?);
    (a == b).then_some(a)
}

fn number(tok: Option<&String>, what: &str) -> Result<usize, String> {
    let tok = tok.ok_or_else(|| format!("missing {what}"))?;
    tok.parse().map_err(|_| format!("expected {what}, got {tok:?}"))
}

/// Splits `"FC4096"` into `"FC"`, `"4096"`.
fn tokens(items: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for word in items.iter().flat_map(|s| s.split([',', ' ', '\t'])).filter(|w| !w.is_empty()) {
        let upper = word.to_ascii_uppercase();
        match upper.strip_prefix("FC") {
            Some(rest) if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) => {
                out.push("FC".into());
                out.push(rest.into());
            }
            _ => out.push(upper),
        }
    }
    out
}

pub fn parse_table(input_shape: &[usize], items: &[String], seed: u64) -> Result<NetworkSpec, String> {
    let toks = tokens(items);
    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut image = input_shape.len() > 1;
    let mut classifier = None;
    let mut i = 0;
    while i < toks.len() {
        if classifier.is_some() {
            return Err(format!("layers after the classifier: {:?}", &toks[i..]));
        }
        let t = toks[i].as_str();
        i += 1;
        match t {
            "BN" => layers.push(LayerSpec::batch_norm()),
            "RELU" => layers.push(LayerSpec::Relu),
            "FLATTEN" => {
                layers.push(LayerSpec::Flatten);
                image = false;
            }
            "FC" | "RP" => {
                let n = if t == "RP" {
                    let n = number(toks.get(i), "projection width after RP")?;
                    if toks.get(i + 1).map(String::as_str) != Some("FC") {
                        return Err("RP n must be followed by FC d".into());
                    }
                    i += 2;
                    Some(n)
                } else {
                    None
                };
                let units = number(toks.get(i), "units after FC")?;
                i += 1;
                if image {
                    layers.push(LayerSpec::Flatten);
                    image = false;
                }
                let last_fc = !toks[i..].iter().any(|t| t == "FC");
                match n {
                    None if last_fc => classifier = Some(units),
                    None => layers.push(LayerSpec::dense(units)),
                    Some(_) if last_fc => return Err("the classifier must be a plain FC".into()),
                    Some(n) => layers.push(LayerSpec::rp_dense(n, units, derive_seed(seed, layers.len() as u64))),
                }
            }
            _ => {
                let h = window(t).ok_or_else(|| format!("unknown layer token {t:?}"))?;
                let kind = toks.get(i).map(String::as_str);
                i += 1;
                match kind {
                    Some("MP") => layers.push(LayerSpec::max_pool(h)),
                    Some("CONV") => {
                        let c = number(toks.get(i), "channels after CONV")?;
                        i += 1;
                        layers.push(LayerSpec::conv(h, c));
                    }
                    Some(rp @ ("RP-I" | "RP-II")) => {
                        let n = number(toks.get(i), "projection width")?;
                        if toks.get(i + 1).map(String::as_str) != Some("CONV") {
                            return Err(format!("{rp} n must be followed by CONV c"));
                        }
                        let c = number(toks.get(i + 2), "channels after CONV")?;
                        i += 3;
                        let next_seed = derive_seed(seed, layers.len() as u64);
                        layers.push(if rp == "RP-I" {
                            LayerSpec::rp_conv_i(n, h, c, next_seed)
                        } else {
                            LayerSpec::rp_conv_ii(n, h, c, next_seed)
                        });
                    }
                    other => return Err(format!("expected MP, CONV or RP-I/RP-II after {t}, got {other:?}")),
                }
            }
        }
    }
    let outputs = classifier.ok_or("the model must end with FC c (the classifier)")?;
    if image {
        layers.push(LayerSpec::Flatten);
    }
    Ok(NetworkSpec::new(input_shape.to_vec(), layers, outputs))
}
