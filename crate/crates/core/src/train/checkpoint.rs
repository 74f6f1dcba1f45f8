//! Plain-text parameter dump. A header line lists each tensor's name and
//! shape; values follow one tensor per line.

use std::fs;
use std::path::Path;

use super::{DiscriminatorParams, DytedModel};
use crate::autodiff::Tensor;
use crate::encoder::{EncoderParams, EncoderShape};
use crate::error::{Error, Result};

const MAGIC: &str = "# dyted checkpoint v1";

fn push_tensor(out: &mut String, name: &str, t: &Tensor) {
    out.push_str(&format!("tensor {name} {} {}\n", t.rows(), t.cols()));
    let vals: Vec<String> = t.data().iter().map(|v| format!("{v:e}")).collect();
    out.push_str(&vals.join(" "));
    out.push('\n');
}

pub fn save_checkpoint(model: &DytedModel, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("{MAGIC}\nalpha_raw {:e}\n", model.alpha_raw);
    for (prefix, enc) in [("gi", &model.invariant), ("gv", &model.varying)] {
        for (name, t) in enc.named() {
            push_tensor(&mut out, &format!("{prefix}.{name}"), t);
        }
    }
    for (name, t) in DiscriminatorParams::NAMES
        .iter()
        .zip(model.discriminator.tensors())
    {
        push_tensor(&mut out, &format!("disc.{name}"), t);
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DytedModel> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, msg: &str| Error::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => return Err(bad(0, "not a checkpoint file")),
    }
    let (i, l) = lines.next().ok_or_else(|| bad(1, "missing alpha_raw"))?;
    let alpha_raw = l
        .strip_prefix("alpha_raw ")
        .and_then(|x| x.parse::<f64>().ok())
        .ok_or_else(|| bad(i, "expected `alpha_raw <value>`"))?;

    let mut gi = Vec::new();
    let mut gv = Vec::new();
    let mut disc = Vec::new();
    while let Some((i, header)) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = header.split_whitespace().collect();
        let [kw, name, r, c] = f[..] else {
            return Err(bad(i, "expected `tensor <name> <rows> <cols>`"));
        };
        let (Ok(r), Ok(c)) = (r.parse::<usize>(), c.parse::<usize>()) else {
            return Err(bad(i, "bad tensor shape"));
        };
        if kw != "tensor" {
            return Err(bad(i, "expected `tensor`"));
        }
        let (j, body) = lines.next().ok_or_else(|| bad(i + 1, "missing tensor values"))?;
        let data = body
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(j, "bad tensor value"))?;
        let t = Tensor::new(vec![r, c], data).map_err(|_| bad(j, "value count does not match shape"))?;
        match name.split_once('.').map(|p| p.0) {
            Some("gi") => gi.push(t),
            Some("gv") => gv.push(t),
            Some("disc") => disc.push(t),
            _ => return Err(bad(i, "unknown tensor group")),
        }
    }
    let shape_of = |ts: &[Tensor]| -> Result<EncoderShape> {
        match (ts.first(), ts.get(14)) {
            (Some(e), Some(o)) => Ok(EncoderShape {
                node_count: e.rows(),
                hidden: e.cols(),
                out_dim: o.cols(),
            }),
            _ => Err(Error::Contract("checkpoint is missing encoder tensors".into())),
        }
    };
    Ok(DytedModel {
        invariant: EncoderParams::from_named(shape_of(&gi)?, gi)?,
        varying: EncoderParams::from_named(shape_of(&gv)?, gv)?,
        discriminator: DiscriminatorParams::from_tensors(disc)?,
        alpha_raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::TrainConfig;

    #[test]
    fn round_trip_is_exact() {
        let cfg = TrainConfig {
            d: 6,
            alpha_init: 0.3,
            ..Default::default()
        };
        let model = DytedModel::init(&cfg, 5);
        let dir = std::env::temp_dir().join(format!("dyted-ckpt-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        save_checkpoint(&model, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), model);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn rejects_foreign_files() {
        let path = std::env::temp_dir().join(format!("dyted-notckpt-{}", std::process::id()));
        fs::write(&path, "hello\n").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Parse { line: 1, .. })));
        fs::remove_file(&path).unwrap();
    }
}
