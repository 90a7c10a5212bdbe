//! Binary checkpoint container: magic + version header followed by named
//! f64 arrays (little-endian) for every parameter, optimizer moment, and the
//! metadata needed to rebuild the networks. Any malformed content loads as
//! [`Error::Checkpoint`].

use std::collections::BTreeMap;
use std::path::Path;

use crate::agent::train::Optimizers;
use crate::error::{Error, Result};
use crate::model::{Actor, ArchConfig, GenerativeModel};
use crate::nn::adam::Adam;
use crate::nn::tensor::Tensor;
use crate::rng::stream;
use crate::sim::obs::ObsLayout;

const MAGIC: &[u8; 8] = b"AIFCKPT\0";
const VERSION: u32 = 1;

/// Everything needed to resume or evaluate a trained agent.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: GenerativeModel,
    pub actor: Actor,
    pub opts: Optimizers,
    /// Planning horizon the networks were trained with.
    pub horizon: usize,
    /// Calibrated reference throughput, if known at save time.
    pub max_throughput: Option<f64>,
}

fn corrupt(detail: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{detail}"))
}

// ---------------------------------------------------------------------------
// Entry assembly
// ---------------------------------------------------------------------------

struct Entries(Vec<(String, Vec<usize>, Vec<f64>)>);

impl Entries {
    fn push(&mut self, name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        self.0.push((name.into(), dims, data));
    }

    fn push_scalar(&mut self, name: impl Into<String>, x: f64) {
        self.push(name, vec![1], vec![x]);
    }

    fn push_tensors(&mut self, prefix: &str, tensors: &[&Tensor]) {
        for (i, t) in tensors.iter().enumerate() {
            self.push(format!("{prefix}/{i}"), t.shape.clone(), t.data.clone());
        }
    }

    fn push_adam(&mut self, prefix: &str, adam: &Adam) {
        self.push_scalar(format!("{prefix}/step"), adam.step_count() as f64);
        let (m, v) = adam.moments();
        for (i, buf) in m.iter().enumerate() {
            self.push(format!("{prefix}/m/{i}"), vec![buf.len()], buf.clone());
        }
        for (i, buf) in v.iter().enumerate() {
            self.push(format!("{prefix}/v/{i}"), vec![buf.len()], buf.clone());
        }
    }
}

fn usize_list(xs: &[usize]) -> Vec<f64> {
    xs.iter().map(|&x| x as f64).collect()
}

fn build_entries(ck: &Checkpoint) -> Entries {
    let mut e = Entries(Vec::new());
    let layout = ck.model.layout;
    let arch = &ck.model.arch;

    e.push("meta/layout", vec![2], vec![layout.buffer_capacity as f64, layout.machines as f64]);
    e.push_scalar("meta/arch/latent_dim", arch.latent_dim as f64);
    e.push(
        "meta/arch/encoder_hidden",
        vec![arch.encoder_hidden.len()],
        usize_list(&arch.encoder_hidden),
    );
    e.push(
        "meta/arch/transition_hidden",
        vec![arch.transition_hidden.len()],
        usize_list(&arch.transition_hidden),
    );
    e.push(
        "meta/arch/decoder_hidden",
        vec![arch.decoder_hidden.len()],
        usize_list(&arch.decoder_hidden),
    );
    e.push_scalar("meta/arch/actor_hidden", arch.actor_hidden as f64);
    e.push_scalar("meta/arch/lambda_s", arch.lambda_s);
    e.push_scalar("meta/arch/var_floor", arch.var_floor);
    e.push_scalar("meta/arch/dropout", arch.dropout);
    e.push_scalar("meta/horizon", ck.horizon as f64);
    if let Some(t) = ck.max_throughput {
        e.push_scalar("meta/max_throughput", t);
    }

    e.push_tensors("params/encoder", &ck.model.encoder.tensors());
    e.push_tensors("params/transition", &ck.model.transition.tensors());
    e.push_tensors("params/decoder", &ck.model.decoder.tensors());
    e.push_tensors("params/actor", &ck.actor.net.tensors());

    e.push_adam("opt/encoder", &ck.opts.encoder);
    e.push_adam("opt/transition", &ck.opts.transition);
    e.push_adam("opt/decoder", &ck.opts.decoder);
    e.push_adam("opt/actor", &ck.opts.actor);
    e
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let entries = build_entries(ck);
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.0.len() as u32).to_le_bytes());
    for (name, dims, data) in &entries.0 {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.push(dims.len() as u8);
        for &d in dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("entry size overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

type EntryMap = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

fn read_entries(bytes: &[u8]) -> Result<EntryMap> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(corrupt("bad magic (not a checkpoint file)"));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let count = cur.u32()? as usize;
    let mut map = EntryMap::new();
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| corrupt("entry name is not UTF-8"))?
            .to_string();
        let ndim = cur.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.u32()? as usize);
        }
        let numel = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| corrupt("entry dims overflow"))?;
        let data = cur.f64s(numel)?;
        if map.insert(name.clone(), (dims, data)).is_some() {
            return Err(corrupt(format!("duplicate entry `{name}`")));
        }
    }
    if cur.pos != bytes.len() {
        return Err(corrupt("trailing bytes after final entry"));
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

fn take_entry(map: &mut EntryMap, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    map.remove(name).ok_or_else(|| corrupt(format!("missing entry `{name}`")))
}

fn take_scalar(map: &mut EntryMap, name: &str) -> Result<f64> {
    let (_, data) = take_entry(map, name)?;
    if data.len() != 1 {
        return Err(corrupt(format!("entry `{name}` should hold one value")));
    }
    Ok(data[0])
}

fn take_usize(map: &mut EntryMap, name: &str) -> Result<usize> {
    let x = take_scalar(map, name)?;
    if !(x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64) {
        return Err(corrupt(format!("entry `{name}` is not a valid count: {x}")));
    }
    Ok(x as usize)
}

fn take_usize_list(map: &mut EntryMap, name: &str) -> Result<Vec<usize>> {
    let (_, data) = take_entry(map, name)?;
    data.iter()
        .map(|&x| {
            if x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
                Ok(x as usize)
            } else {
                Err(corrupt(format!("entry `{name}` holds a non-count value: {x}")))
            }
        })
        .collect()
}

fn load_tensors(map: &mut EntryMap, prefix: &str, tensors: &mut [&mut Tensor]) -> Result<()> {
    for (i, t) in tensors.iter_mut().enumerate() {
        let name = format!("{prefix}/{i}");
        let (dims, data) = take_entry(map, &name)?;
        if dims != t.shape {
            return Err(corrupt(format!(
                "entry `{name}` has shape {dims:?}, expected {:?}",
                t.shape
            )));
        }
        t.data = data;
    }
    Ok(())
}

fn load_adam(map: &mut EntryMap, prefix: &str, adam: &mut Adam, param_sizes: &[usize]) -> Result<()> {
    let step = take_scalar(map, &format!("{prefix}/step"))?;
    if !(step.is_finite() && step >= 0.0 && step.fract() == 0.0) {
        return Err(corrupt(format!("entry `{prefix}/step` is not a valid step count")));
    }
    // Moment buffers exist only once the optimizer has stepped.
    let has_moments = map.contains_key(&format!("{prefix}/m/0"));
    let (m, v) = if has_moments {
        let mut m = Vec::with_capacity(param_sizes.len());
        let mut v = Vec::with_capacity(param_sizes.len());
        for (i, &len) in param_sizes.iter().enumerate() {
            for (kind, dst) in [("m", &mut m), ("v", &mut v)] {
                let name = format!("{prefix}/{kind}/{i}");
                let (_, data) = take_entry(map, &name)?;
                if data.len() != len {
                    return Err(corrupt(format!(
                        "entry `{name}` has {} values, expected {len}",
                        data.len()
                    )));
                }
                dst.push(data);
            }
        }
        (m, v)
    } else {
        (Vec::new(), Vec::new())
    };
    adam.restore(step as u64, m, v);
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)
        .map_err(|e| corrupt(format!("cannot read {}: {e}", path.display())))?;
    let mut map = read_entries(&bytes)?;

    let layout_entry = take_entry(&mut map, "meta/layout")?.1;
    if layout_entry.len() != 2 {
        return Err(corrupt("meta/layout should hold [buffer_capacity, machines]"));
    }
    let layout = ObsLayout {
        buffer_capacity: layout_entry[0] as usize,
        machines: layout_entry[1] as usize,
    };
    let arch = ArchConfig {
        latent_dim: take_usize(&mut map, "meta/arch/latent_dim")?,
        encoder_hidden: take_usize_list(&mut map, "meta/arch/encoder_hidden")?,
        transition_hidden: take_usize_list(&mut map, "meta/arch/transition_hidden")?,
        decoder_hidden: take_usize_list(&mut map, "meta/arch/decoder_hidden")?,
        actor_hidden: take_usize(&mut map, "meta/arch/actor_hidden")?,
        lambda_s: take_scalar(&mut map, "meta/arch/lambda_s")?,
        var_floor: take_scalar(&mut map, "meta/arch/var_floor")?,
        dropout: take_scalar(&mut map, "meta/arch/dropout")?,
    };
    let horizon = take_usize(&mut map, "meta/horizon")?;
    let max_throughput = match map.remove("meta/max_throughput") {
        Some((_, data)) if data.len() == 1 => Some(data[0]),
        Some(_) => return Err(corrupt("meta/max_throughput should hold one value")),
        None => None,
    };

    // Rebuild networks at the recorded architecture, then overwrite every
    // parameter from the stored entries.
    let mut init = stream(0, "checkpoint-load");
    let mut model = GenerativeModel::new(layout, arch.clone(), &mut init)
        .map_err(|e| corrupt(format!("invalid stored architecture: {e}")))?;
    let mut actor = Actor::new(layout, &arch, &mut init)
        .map_err(|e| corrupt(format!("invalid stored architecture: {e}")))?;
    load_tensors(&mut map, "params/encoder", &mut model.encoder.tensors_mut())?;
    load_tensors(&mut map, "params/transition", &mut model.transition.tensors_mut())?;
    load_tensors(&mut map, "params/decoder", &mut model.decoder.tensors_mut())?;
    load_tensors(&mut map, "params/actor", &mut actor.net.tensors_mut())?;

    let mut opts = Optimizers::new();
    let sizes = |ts: Vec<&Tensor>| ts.iter().map(|t| t.numel()).collect::<Vec<_>>();
    load_adam(&mut map, "opt/encoder", &mut opts.encoder, &sizes(model.encoder.tensors()))?;
    load_adam(&mut map, "opt/transition", &mut opts.transition, &sizes(model.transition.tensors()))?;
    load_adam(&mut map, "opt/decoder", &mut opts.decoder, &sizes(model.decoder.tensors()))?;
    load_adam(&mut map, "opt/actor", &mut opts.actor, &sizes(actor.net.tensors()))?;

    if let Some(name) = map.keys().next() {
        return Err(corrupt(format!("unrecognized entry `{name}`")));
    }
    Ok(Checkpoint { model, actor, opts, horizon, max_throughput })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::replay::ReplayMemory;
    use crate::agent::train::{train_epoch, TrainConfig, TrainRngs};
    use crate::sim::config::SimConfig;
    use crate::sim::state::Workstation;

    fn fresh(seed: u64) -> Checkpoint {
        let sim = SimConfig { max_throughput: Some(0.0497), ..SimConfig::default() };
        let layout = ObsLayout::from_config(&sim);
        let mut rng = stream(seed, "init");
        let arch = ArchConfig::default();
        let model = GenerativeModel::new(layout, arch.clone(), &mut rng).unwrap();
        let actor = Actor::new(layout, &arch, &mut rng).unwrap();
        Checkpoint {
            model,
            actor,
            opts: Optimizers::new(),
            horizon: 300,
            max_throughput: Some(0.0497),
        }
    }

    fn trained(seed: u64) -> Checkpoint {
        let mut ck = fresh(seed);
        let sim = SimConfig { max_throughput: Some(0.0497), ..SimConfig::default() };
        let mut ws = Workstation::new(sim, seed).unwrap();
        let cfg = TrainConfig {
            iterations: 2,
            horizon: 10,
            batch_model: 4,
            batch_policy: 4,
            samples_outer: 2,
            samples_inner: 2,
            ..TrainConfig::default()
        };
        let mut memory = ReplayMemory::new(100).unwrap();
        let mut rngs = TrainRngs::for_epoch(seed, 0);
        train_epoch(
            &mut ws, &mut ck.model, &mut ck.actor, &mut memory, &mut ck.opts, &cfg, &mut rngs, 0, 1,
        )
        .unwrap();
        ck
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = std::env::temp_dir().join("aif-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.ckpt");
        let ck = trained(11);
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();

        assert_eq!(back.horizon, 300);
        assert_eq!(back.max_throughput, Some(0.0497));
        for (a, b) in ck.model.encoder.tensors().iter().zip(back.model.encoder.tensors()) {
            assert_eq!(a.data, b.data);
            assert_eq!(a.shape, b.shape);
        }
        for (a, b) in ck.actor.net.tensors().iter().zip(back.actor.net.tensors()) {
            assert_eq!(a.data, b.data);
        }
        assert_eq!(back.opts.encoder.step_count(), ck.opts.encoder.step_count());
        assert_eq!(back.opts.actor.moments().0, ck.opts.actor.moments().0);
        // Saving the loaded checkpoint is byte-identical.
        let path2 = dir.join("roundtrip2.ckpt");
        save_checkpoint(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn fresh_optimizers_round_trip_without_moments() {
        let dir = std::env::temp_dir().join("aif-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fresh.ckpt");
        let ck = fresh(3);
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.opts.decoder.step_count(), 0);
        assert!(back.opts.decoder.moments().0.is_empty());
    }

    #[test]
    fn bad_magic_is_a_checkpoint_error() {
        let dir = std::env::temp_dir().join("aif-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad-magic.ckpt");
        std::fs::write(&path, b"NOTACKPT________").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err:?}");
    }

    #[test]
    fn truncation_is_detected() {
        let dir = std::env::temp_dir().join("aif-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trunc.ckpt");
        save_checkpoint(&path, &fresh(5)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err:?}");
    }

    #[test]
    fn flipped_payload_byte_changes_loaded_values_but_still_loads() {
        // Payload corruption inside a tensor is indistinguishable from data;
        // structural corruption (here: the entry count) must error.
        let dir = std::env::temp_dir().join("aif-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("count.ckpt");
        save_checkpoint(&path, &fresh(6)).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[12] ^= 0xFF; // entry count
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err:?}");
    }

    #[test]
    fn missing_file_is_a_checkpoint_error() {
        let err = load_checkpoint(Path::new("/nonexistent/nope.ckpt")).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err:?}");
    }
}
