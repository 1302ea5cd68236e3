//! Binary weight file: magic `SRCW`, version 1, little-endian, no padding.
//!
//! ```text
//! "SRCW" | version u32 | input_channels u32 | layer_count u32
//! per layer:
//!   out u32 | in u32 | kh u32 | kw u32 | activation u8
//!   weights f32 * (out*in*kh*kw), (out, in, kh, kw) row-major
//!   biases  f32 * out
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Activation, ConvLayer, SrcnnError, SrcnnModel};

const MAGIC: &[u8; 4] = b"SRCW";
const VERSION: u32 = 1;

pub fn save_weights(model: &SrcnnModel, path: &Path) -> Result<(), SrcnnError> {
    let io_err = |source| SrcnnError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    let write = |w: &mut BufWriter<File>, model: &SrcnnModel| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(model.input_channels() as u32)?;
        w.write_u32::<LittleEndian>(model.layers().len() as u32)?;
        for layer in model.layers() {
            w.write_u32::<LittleEndian>(layer.out_channels() as u32)?;
            w.write_u32::<LittleEndian>(layer.in_channels() as u32)?;
            w.write_u32::<LittleEndian>(layer.kernel_h() as u32)?;
            w.write_u32::<LittleEndian>(layer.kernel_w() as u32)?;
            w.write_u8(layer.activation().tag())?;
            for &v in layer.weights() {
                w.write_f32::<LittleEndian>(v)?;
            }
            for &v in layer.bias() {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        w.flush()
    };
    write(&mut w, model).map_err(io_err)
}

pub fn load_weights(path: &Path) -> Result<SrcnnModel, SrcnnError> {
    let io_err = |source: std::io::Error| SrcnnError::Io {
        path: path.display().to_string(),
        source,
    };
    let fmt_err = |msg: &str| SrcnnError::Format {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    let mut r = BufReader::new(File::open(path).map_err(io_err)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| fmt_err("truncated header"))?;
    if &magic != MAGIC {
        return Err(fmt_err("bad magic"));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| fmt_err("truncated header"))?;
    if version != VERSION {
        return Err(fmt_err(&format!("unsupported version {version}")));
    }
    let input_channels = r
        .read_u32::<LittleEndian>()
        .map_err(|_| fmt_err("truncated header"))? as usize;
    let layer_count = r
        .read_u32::<LittleEndian>()
        .map_err(|_| fmt_err("truncated header"))? as usize;
    if layer_count == 0 || layer_count > 64 {
        return Err(fmt_err(&format!("implausible layer count {layer_count}")));
    }

    let mut layers = Vec::with_capacity(layer_count);
    for li in 0..layer_count {
        let trunc = |_| fmt_err(&format!("truncated layer {li}"));
        let out = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let inp = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let kh = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let kw = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let act_tag = r.read_u8().map_err(trunc)?;
        let activation = Activation::from_tag(act_tag)
            .ok_or_else(|| fmt_err(&format!("unknown activation tag {act_tag}")))?;
        let dims_ok = (1..=4096).contains(&out)
            && (1..=4096).contains(&inp)
            && (1..=99).contains(&kh)
            && (1..=99).contains(&kw);
        if !dims_ok {
            return Err(fmt_err(&format!("implausible layer {li} shape")));
        }
        let n = out * inp * kh * kw;
        let mut weights = vec![0f32; n];
        r.read_f32_into::<LittleEndian>(&mut weights)
            .map_err(trunc)?;
        let mut bias = vec![0f32; out];
        r.read_f32_into::<LittleEndian>(&mut bias).map_err(trunc)?;
        layers.push(ConvLayer::new(out, inp, kh, kw, weights, bias, activation)?);
    }

    let mut trailing = [0u8; 1];
    match r.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(fmt_err("trailing bytes after last layer")),
        Err(e) => return Err(io_err(e)),
    }

    SrcnnModel::new(input_channels, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srcnn::LayerSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_model() -> SrcnnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let specs = [
            LayerSpec {
                out_channels: 4,
                kernel_h: 3,
                kernel_w: 3,
                activation: Activation::Relu,
            },
            LayerSpec {
                out_channels: 1,
                kernel_h: 5,
                kernel_w: 5,
                activation: Activation::None,
            },
        ];
        SrcnnModel::random(1, &specs, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.srcw");
        let model = sample_model();
        save_weights(&model, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.srcw");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            load_weights(&path),
            Err(SrcnnError::Format { .. })
        ));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.srcw");
        save_weights(&sample_model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(
            load_weights(&path),
            Err(SrcnnError::Format { .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.srcw");
        save_weights(&sample_model(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_weights(&path),
            Err(SrcnnError::Format { .. })
        ));
    }

    #[test]
    fn unknown_activation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.srcw");
        save_weights(&sample_model(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // activation tag of layer 0 sits after header (16) + 4 layer dims (16)
        bytes[32] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_weights(&path),
            Err(SrcnnError::Format { .. })
        ));
    }
}
