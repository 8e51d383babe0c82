//! Model checkpoints: one f64 tensor file per parameter plus `manifest.txt`.

use std::fs;
use std::path::Path;

use bedsal_core::model::{Architecture, Network, ParamGroup};

use crate::error::{Error, IoContext, Result};
use crate::tensor::{dims_u32, read_tensor, write_tensor, Tensor};

pub const MANIFEST: &str = "manifest.txt";
const FORMAT: &str = "bedsal-checkpoint 1";

/// Writes `net` into `dir`. `hyper` lines (typically config `key=value`
/// text) are recorded in the manifest.
pub fn save(net: &Network, dir: &Path, hyper: &str) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let arch = net.architecture();
    let mut manifest = format!(
        "format={FORMAT}\nin_channels={}\nconv_widths={},{},{}\nhidden={}\nparameters={}\n",
        arch.in_channels,
        arch.conv_widths[0],
        arch.conv_widths[1],
        arch.conv_widths[2],
        arch.hidden,
        net.parameter_count()
    );
    for (spec, values) in net.param_specs().iter().zip(net.tensors()) {
        let file = format!("{}.bstn", spec.name);
        write_tensor(&dir.join(&file), &Tensor::f64(dims_u32(&spec.dims), values.to_vec()))?;
        let group = match spec.group {
            ParamGroup::Depth => "depth",
            ParamGroup::Fusion => "fusion",
        };
        let dims: Vec<String> = spec.dims.iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("layer={} dims={} group={group} file={file}\n", spec.name, dims.join("x")));
    }
    for line in hyper.lines().filter(|l| !l.is_empty()) {
        manifest.push_str(&format!("hyper.{line}\n"));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).at(&path)
}

fn field<'a>(manifest: &'a str, key: &str) -> Result<&'a str> {
    manifest
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::Invalid(format!("checkpoint manifest lacks {key}")))
}

fn number(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Invalid(format!("bad number {s:?} in checkpoint manifest")))
}

pub fn load(dir: &Path) -> Result<Network> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(Error::MissingArtifact(format!("no checkpoint at {}", dir.display())));
    }
    let manifest = fs::read_to_string(&path).at(&path)?;
    if field(&manifest, "format")? != FORMAT {
        return Err(Error::Invalid(format!("{}: unknown checkpoint format", path.display())));
    }
    let widths: Vec<usize> = field(&manifest, "conv_widths")?
        .split(',')
        .map(number)
        .collect::<Result<_>>()?;
    let arch = Architecture {
        in_channels: number(field(&manifest, "in_channels")?)?,
        conv_widths: widths
            .try_into()
            .map_err(|_| Error::Invalid("conv_widths needs three values".into()))?,
        hidden: number(field(&manifest, "hidden")?)?,
    };
    let shape = Network::zeros(arch)?;
    let mut tensors = Vec::new();
    for spec in shape.param_specs() {
        let t = read_tensor(&dir.join(format!("{}.bstn", spec.name)))?;
        if t.dims_usize() != spec.dims {
            return Err(Error::Invalid(format!(
                "{}: dims {:?}, expected {:?}",
                spec.name, t.dims, spec.dims
            )));
        }
        tensors.push(t.to_f64());
    }
    Ok(Network::from_tensors(arch, &tensors)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::new(
            Architecture {
                in_channels: 4,
                conv_widths: [3, 2, 2],
                hidden: 5,
            },
            9,
        )
        .unwrap();
        save(&net, dir.path(), "seed=9\n").unwrap();
        assert_eq!(load(dir.path()).unwrap(), net);
        let manifest = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert!(manifest.contains("layer=conv1.weight dims=3x4x3x3 group=depth"));
        assert!(manifest.contains("layer=fc2.bias dims=1 group=fusion"));
        assert!(manifest.contains("hyper.seed=9"));
    }

    #[test]
    fn missing_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let err = load(&dir.path().join("none")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
        assert_eq!(err.exit_code(), 1);
    }
}
