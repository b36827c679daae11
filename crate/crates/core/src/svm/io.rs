//! Model persistence in the NTC1 container.
//!
//! Tensors: `meta` = `[strategy (0 = ovo, 1 = ova), label count, labels...]`;
//! OneVsOne binaries as `pair.<i>.<j>.w` / `pair.<i>.<j>.b`, OneVsAll as
//! `ova.<l>.w` / `ova.<l>.b`. Values are stored as f32.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensorio::{self, Tensor, WeightBundle};

use super::{BinaryModel, MulticlassModel, Strategy};

fn key(strategy: Strategy, b: &BinaryModel<impl Scalar>) -> String {
    match strategy {
        Strategy::OneVsOne => format!("pair.{}.{}", b.label_pos, b.label_neg),
        Strategy::OneVsAll => format!("ova.{}", b.label_pos),
    }
}

pub fn model_to_bundle<T: Scalar>(model: &MulticlassModel<T>) -> Result<WeightBundle> {
    let mut bundle = WeightBundle::new();
    let mut meta = vec![
        match model.strategy {
            Strategy::OneVsOne => 0.0,
            Strategy::OneVsAll => 1.0,
        },
        model.labels.len() as f32,
    ];
    meta.extend(model.labels.iter().map(|&l| l as f32));
    bundle.insert(Tensor::vector("meta", meta)?)?;
    for b in &model.binaries {
        let k = key(model.strategy, b);
        let w: Vec<f32> = b.w.iter().map(|v| v.to_f32().unwrap()).collect();
        bundle.insert(Tensor::vector(format!("{k}.w"), w)?)?;
        bundle.insert(Tensor::scalar(format!("{k}.b"), b.b.to_f32().unwrap()))?;
    }
    Ok(bundle)
}

pub fn model_from_bundle<T: Scalar>(bundle: &WeightBundle) -> Result<MulticlassModel<T>> {
    let meta = bundle
        .get("meta")
        .ok_or_else(|| Error::Format("model file lacks meta tensor".into()))?
        .data();
    if meta.len() < 2 || meta.len() != 2 + meta[1] as usize {
        return Err(Error::Format(format!("malformed model meta {meta:?}")));
    }
    let strategy = match meta[0] as u32 {
        0 => Strategy::OneVsOne,
        1 => Strategy::OneVsAll,
        s => return Err(Error::Format(format!("unknown strategy code {s}"))),
    };
    let labels: Vec<usize> = meta[2..].iter().map(|&l| l as usize).collect();
    let jobs: Vec<(usize, usize)> = match strategy {
        Strategy::OneVsOne => labels
            .iter()
            .enumerate()
            .flat_map(|(a, &i)| labels[a + 1..].iter().map(move |&j| (i, j)))
            .collect(),
        Strategy::OneVsAll => labels.iter().map(|&l| (l, l)).collect(),
    };
    let mut binaries = Vec::with_capacity(jobs.len());
    let mut dim = None;
    for (pos, neg) in jobs {
        let probe = BinaryModel::<T> {
            w: Vec::new(),
            b: T::zero(),
            label_pos: pos,
            label_neg: neg,
        };
        let k = key(strategy, &probe);
        let get = |name: String| {
            bundle
                .get(&name)
                .ok_or_else(|| Error::Format(format!("model file lacks {name}")))
        };
        let w = get(format!("{k}.w"))?;
        let b = get(format!("{k}.b"))?;
        if *dim.get_or_insert(w.len()) != w.len() || b.len() != 1 {
            return Err(Error::Format(format!("inconsistent shapes for {k}")));
        }
        binaries.push(BinaryModel {
            w: w.data().iter().map(|&v| T::from_f32(v).unwrap()).collect(),
            b: T::from_f32(b.data()[0]).unwrap(),
            label_pos: pos,
            label_neg: neg,
        });
    }
    if bundle.len() != 1 + 2 * binaries.len() {
        return Err(Error::Format("model file has unexpected tensors".into()));
    }
    Ok(MulticlassModel {
        strategy,
        labels,
        binaries,
    })
}

pub fn save_model<T: Scalar>(model: &MulticlassModel<T>, path: impl AsRef<Path>) -> Result<()> {
    tensorio::save_bundle(&model_to_bundle(model)?, path)
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<MulticlassModel<T>> {
    model_from_bundle(&tensorio::load_raw(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_strategies() {
        let dir = tempfile::tempdir().unwrap();
        for strategy in [Strategy::OneVsOne, Strategy::OneVsAll] {
            let labels = vec![0, 2, 5];
            let jobs: Vec<(usize, usize)> = match strategy {
                Strategy::OneVsOne => vec![(0, 2), (0, 5), (2, 5)],
                Strategy::OneVsAll => vec![(0, 0), (2, 2), (5, 5)],
            };
            let model = MulticlassModel {
                strategy,
                labels,
                binaries: jobs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (p, n))| BinaryModel {
                        w: vec![0.5 * i as f64, -0.25, 1.0],
                        b: -(i as f64),
                        label_pos: p,
                        label_neg: n,
                    })
                    .collect(),
            };
            let path = dir.path().join(format!("{strategy}.ntc"));
            save_model(&model, &path).unwrap();
            let back: MulticlassModel<f64> = load_model(&path).unwrap();
            assert_eq!(back, model);
            let bundle = tensorio::load_raw(&path).unwrap();
            if strategy == Strategy::OneVsOne {
                assert!(bundle.get("pair.0.5.w").is_some());
            } else {
                assert!(bundle.get("ova.2.b").is_some());
            }
        }
    }

    #[test]
    fn missing_tensor_is_format_error() {
        let mut bundle = WeightBundle::new();
        bundle.insert(Tensor::vector("meta", vec![1.0, 2.0, 0.0, 1.0]).unwrap()).unwrap();
        assert!(matches!(model_from_bundle::<f64>(&bundle), Err(Error::Format(_))));
    }
}
