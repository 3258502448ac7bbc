//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "ZNETCKPT"
//! version      u32      1
//! depth        u32
//! base         u32
//! in_channels  u32
//! height       u32
//! width        u32
//! skip_align   u8       0 = pool, 1 = crop
//! precision    u8       0 = f32, 1 = f64
//! architecture u8       0 = znet, 1 = unet
//! reserved     u8
//! adam_step    u64
//! epoch        u64      completed epochs
//! step         u64      completed optimizer steps
//! count        u32      number of entries
//! entries      count × { name_len u32, name bytes, ndims u32, dims u32 × ndims, payload f32 × Π dims }
//! ```
//!
//! Entries are every store entry in order, followed by the Adam first and
//! second moments of each trainable entry under `<name>@adam_m` and
//! `<name>@adam_v`.

use std::fs;
use std::path::Path;

use super::config::{Architecture, SkipAlign, ZNetConfig};
use super::net::ZNet;
use super::params::{ParamKind, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Precision, Scalar};

const MAGIC: &[u8; 8] = b"ZNETCKPT";
const VERSION: u32 = 1;

/// Optimizer and loop counters saved alongside the weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrainState {
    pub adam_step: u64,
    pub epoch: u64,
    pub step: u64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub cfg: ZNetConfig,
    pub arch: Architecture,
    pub state: TrainState,
    pub store: ParamStore<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn into_net(self) -> Result<(ZNet<T>, TrainState)> {
        let cfg = ZNetConfig {
            precision: T::PRECISION,
            ..self.cfg
        };
        Ok((ZNet::from_store(cfg, self.arch, self.store)?, self.state))
    }
}

pub fn encode_checkpoint<T: Scalar>(net: &ZNet<T>, state: TrainState) -> Result<Vec<u8>> {
    let cfg = net.config();
    let store = net.store();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    for v in [
        cfg.depth,
        cfg.base_channels,
        cfg.in_channels,
        cfg.input_size.0,
        cfg.input_size.1,
    ] {
        put_usize(&mut buf, v)?;
    }
    buf.push(match cfg.skip_align {
        SkipAlign::Pool => 0,
        SkipAlign::Crop => 1,
    });
    buf.push(match cfg.precision {
        Precision::F32 => 0,
        Precision::F64 => 1,
    });
    buf.push(match net.architecture() {
        Architecture::ZNet => 0,
        Architecture::UNet => 1,
    });
    buf.push(0);
    for v in [state.adam_step, state.epoch, state.step] {
        buf.extend_from_slice(&v.to_le_bytes());
    }

    let trainable: Vec<_> = store.trainable_ids().collect();
    put_usize(&mut buf, store.len() + 2 * trainable.len())?;
    for id in store.ids() {
        put_entry(&mut buf, store.name(id), store.shape(id), store.value(id))?;
    }
    for id in trainable {
        let (m, v) = store.adam_moments(id);
        put_entry(
            &mut buf,
            &format!("{}@adam_m", store.name(id)),
            store.shape(id),
            m,
        )?;
        put_entry(
            &mut buf,
            &format!("{}@adam_v", store.name(id)),
            store.shape(id),
            v,
        )?;
    }
    Ok(buf)
}

/// Writes a checkpoint via a temporary file and rename.
pub fn save_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    net: &ZNet<T>,
    state: TrainState,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(net, state)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint; if `expected` is given, the stored config must equal it.
pub fn load_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    expected: Option<&ZNetConfig>,
) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path, expected)
}

pub fn decode_checkpoint<T: Scalar>(
    bytes: &[u8],
    path: &Path,
    expected: Option<&ZNetConfig>,
) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, at: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::parse(path, "magic", "not a znet checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::parse(
            path,
            "version",
            format!("unsupported version {version}"),
        ));
    }
    let depth = r.u32()? as usize;
    let base_channels = r.u32()? as usize;
    let in_channels = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let skip_align = match r.u8()? {
        0 => SkipAlign::Pool,
        1 => SkipAlign::Crop,
        v => return Err(Error::parse(path, "skip_align", format!("unknown tag {v}"))),
    };
    let precision = match r.u8()? {
        0 => Precision::F32,
        1 => Precision::F64,
        v => return Err(Error::parse(path, "precision", format!("unknown tag {v}"))),
    };
    let arch = match r.u8()? {
        0 => Architecture::ZNet,
        1 => Architecture::UNet,
        v => {
            return Err(Error::parse(
                path,
                "architecture",
                format!("unknown tag {v}"),
            ))
        }
    };
    r.u8()?;
    let state = TrainState {
        adam_step: r.u64()?,
        epoch: r.u64()?,
        step: r.u64()?,
    };
    let cfg = ZNetConfig {
        depth,
        base_channels,
        input_size: (h, w),
        in_channels,
        skip_align,
        precision,
    };
    if let Some(exp) = expected {
        if exp != &cfg {
            return Err(Error::config(format!(
                "checkpoint {} was written for {cfg:?}, expected {exp:?}",
                path.display()
            )));
        }
    }

    // The stored precision describes the trained network; the payload is f32
    // either way and is loaded into whatever scalar the caller asks for.
    let load_cfg = ZNetConfig {
        precision: T::PRECISION,
        ..cfg
    };
    let mut net = ZNet::<T>::build(load_cfg, arch, 0)?;
    let count = r.u32()? as usize;
    let store = net.store_mut();
    let expected_count = store.len() + 2 * store.trainable_count_entries();
    if count != expected_count {
        return Err(Error::config(format!(
            "checkpoint holds {count} entries, configuration needs {expected_count}"
        )));
    }
    let ids: Vec<_> = store.ids().collect();
    for &id in &ids {
        let (name, dims, data) = r.entry()?;
        if name != store.name(id) || dims != store.shape(id) {
            return Err(Error::config(format!(
                "checkpoint entry {name:?} {dims:?} does not match {:?} {:?}",
                store.name(id),
                store.shape(id)
            )));
        }
        store.value_mut(id).copy_from_slice(&data);
    }
    let trainable: Vec<_> = ids
        .into_iter()
        .filter(|&id| store.kind(id) == ParamKind::Trainable)
        .collect();
    for id in trainable {
        let mut moments = Vec::with_capacity(2);
        for suffix in ["adam_m", "adam_v"] {
            let (name, dims, data) = r.entry()?;
            let want = format!("{}@{suffix}", store.name(id));
            if name != want || dims != store.shape(id) {
                return Err(Error::config(format!(
                    "checkpoint entry {name:?} where {want:?} was expected"
                )));
            }
            moments.push(data);
        }
        let v = moments.pop().unwrap();
        let m = moments.pop().unwrap();
        store.set_adam_moments(id, m, v)?;
    }
    if r.at != bytes.len() {
        return Err(Error::parse(
            path,
            "payload",
            "trailing bytes after last entry",
        ));
    }
    let store = std::mem::take(net.store_mut());
    Ok(Checkpoint {
        cfg,
        arch,
        state,
        store,
    })
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_usize(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::shape(format!("{v} exceeds u32")))?;
    put_u32(buf, v);
    Ok(())
}

fn put_entry<T: Scalar>(buf: &mut Vec<u8>, name: &str, dims: &[usize], data: &[T]) -> Result<()> {
    put_usize(buf, name.len())?;
    buf.extend_from_slice(name.as_bytes());
    put_usize(buf, dims.len())?;
    for &d in dims {
        put_usize(buf, d)?;
    }
    for &v in data {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse(self.path, "payload", "unexpected end of checkpoint"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn entry<T: Scalar>(&mut self) -> Result<(String, Vec<usize>, Vec<T>)> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::parse(self.path, "name", "entry name is not UTF-8"))?;
        let ndims = self.u32()? as usize;
        let dims = (0..ndims)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let raw = self.take(
            count
                .checked_mul(4)
                .ok_or_else(|| Error::parse(self.path, &name, "entry too large"))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        Ok((name, dims, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let mut net = ZNet::<f32>::new(ZNetConfig::tiny(), 3).unwrap();
        let id = net.store().trainable_ids().nth(2).unwrap();
        let len = net.store().value(id).len();
        net.store_mut()
            .set_adam_moments(id, vec![0.25; len], vec![0.5; len])
            .unwrap();
        let state = TrainState {
            adam_step: 7,
            epoch: 2,
            step: 7,
        };
        let bytes = encode_checkpoint(&net, state).unwrap();
        let ck: Checkpoint<f32> =
            decode_checkpoint(&bytes, Path::new("mem"), Some(net.config())).unwrap();
        assert_eq!(ck.state, state);
        assert_eq!(&ck.store, net.store());
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let net = ZNet::<f32>::new(ZNetConfig::tiny(), 3).unwrap();
        let bytes = encode_checkpoint(&net, TrainState::default()).unwrap();
        let other = ZNetConfig {
            base_channels: 8,
            ..ZNetConfig::tiny()
        };
        let err = decode_checkpoint::<f32>(&bytes, Path::new("mem"), Some(&other)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(
            decode_checkpoint::<f32>(&bytes[..bytes.len() - 1], Path::new("mem"), None).is_err()
        );
    }
}
