//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `BRUNOCKP`, format version `u32`, section
//! count `u32`, then sections `(tag u32, length u64, payload)`, then a CRC32
//! of everything before it.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flow::{FlowStack, PreprocessConfig};
use crate::model::{BrunoModel, ModelConfig, ModelError, RawProcess, RmsProp, TrainerState};
use crate::process::ProcessMode;

pub const MAGIC: &[u8; 8] = b"BRUNOCKP";
pub const FORMAT_VERSION: u32 = 1;

const TAG_HYPER: u32 = 1;
const TAG_FLOW: u32 = 2;
const TAG_PROCESS: u32 = 3;
const TAG_OPTIMIZER: u32 = 4;
const TAG_RNG: u32 = 5;
const TAG_ITERATION: u32 = 6;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint format version {found} is not supported (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A model plus, optionally, the state needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: BrunoModel,
    pub optimizers: Option<(RmsProp, RmsProp)>,
    pub rng: Option<ChaCha8Rng>,
    pub iteration: u64,
    pub trace: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: BrunoModel) -> Self {
        Self {
            model,
            optimizers: None,
            rng: None,
            iteration: 0,
            trace: Vec::new(),
        }
    }

    pub fn from_trainer(state: &TrainerState) -> Self {
        Self {
            model: state.model.clone(),
            optimizers: Some((state.flow_opt.clone(), state.process_opt.clone())),
            rng: Some(state.rng.clone()),
            iteration: state.iteration as u64,
            trace: state.trace.clone(),
        }
    }

    /// Trainer state; a checkpoint without optimizer or generator state
    /// resumes with fresh ones.
    pub fn into_trainer_state(self, decay: f64, eps: f64, seed: u64) -> TrainerState {
        let (flow_opt, process_opt) = self.optimizers.unwrap_or_else(|| {
            (
                RmsProp::new(self.model.flow().num_params(), decay, eps),
                RmsProp::new(3 * self.model.dim(), decay, eps),
            )
        });
        TrainerState {
            flow_opt,
            process_opt,
            rng: self.rng.unwrap_or_else(|| ChaCha8Rng::seed_from_u64(seed)),
            iteration: self.iteration as usize,
            trace: self.trace,
            model: self.model,
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, at: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::CorruptFile("unexpected end of data".into()))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.at) / 8 {
            return Err(CheckpointError::CorruptFile("array length exceeds section".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn bool(&mut self) -> Result<bool, CheckpointError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(CheckpointError::CorruptFile(format!("invalid flag byte {b}"))),
        }
    }
    fn done(&self) -> Result<(), CheckpointError> {
        if self.at == self.bytes.len() {
            Ok(())
        } else {
            Err(CheckpointError::CorruptFile("trailing bytes in section".into()))
        }
    }
}

fn hyper_section(c: &ModelConfig) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u64(c.dim as u64);
    w.u64(c.depth as u64);
    w.u64(c.hidden as u64);
    w.u8(c.weightnorm.into());
    w.u8(match c.mode {
        ProcessMode::StudentT => 0,
        ProcessMode::Gaussian => 1,
    });
    w.f64(c.preprocess.alpha);
    w.u32(c.preprocess.num_levels);
    w.u8(c.preprocess.dequantize.into());
    w.u8(c.preprocess.logit.into());
    w.f64(c.init_nu);
    w.f64(c.init_v);
    w.f64(c.init_rho);
    w.0
}

fn read_hyper(bytes: &[u8]) -> Result<ModelConfig, CheckpointError> {
    let mut r = Reader::new(bytes);
    let dim = r.u64()? as usize;
    let depth = r.u64()? as usize;
    let hidden = r.u64()? as usize;
    let weightnorm = r.bool()?;
    let mode = match r.u8()? {
        0 => ProcessMode::StudentT,
        1 => ProcessMode::Gaussian,
        b => return Err(CheckpointError::CorruptFile(format!("unknown process mode {b}"))),
    };
    let preprocess = PreprocessConfig {
        alpha: r.f64()?,
        num_levels: r.u32()?,
        dequantize: r.bool()?,
        logit: r.bool()?,
    };
    let config = ModelConfig {
        dim,
        depth,
        hidden,
        weightnorm,
        mode,
        preprocess,
        init_nu: r.f64()?,
        init_v: r.f64()?,
        init_rho: r.f64()?,
    };
    r.done()?;
    Ok(config)
}

fn optimizer_section(w: &mut Writer, opt: &RmsProp) {
    w.f64(opt.decay);
    w.f64(opt.eps);
    w.f64s(&opt.mean_square);
}

fn read_optimizer(r: &mut Reader) -> Result<RmsProp, CheckpointError> {
    Ok(RmsProp {
        decay: r.f64()?,
        eps: r.f64()?,
        mean_square: r.f64s()?,
    })
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let model = &ckpt.model;
    let mut sections: Vec<(u32, Vec<u8>)> = vec![(TAG_HYPER, hyper_section(model.config()))];

    let mut w = Writer(Vec::new());
    w.f64s(&model.flow().params());
    sections.push((TAG_FLOW, w.0));

    let mut w = Writer(Vec::new());
    w.f64s(&model.raw_process().flatten());
    sections.push((TAG_PROCESS, w.0));

    if let Some((flow_opt, process_opt)) = &ckpt.optimizers {
        let mut w = Writer(Vec::new());
        optimizer_section(&mut w, flow_opt);
        optimizer_section(&mut w, process_opt);
        sections.push((TAG_OPTIMIZER, w.0));
    }
    if let Some(rng) = &ckpt.rng {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&rng.get_seed());
        w.u64(rng.get_stream());
        w.0.extend_from_slice(&rng.get_word_pos().to_le_bytes());
        sections.push((TAG_RNG, w.0));
    }
    let mut w = Writer(Vec::new());
    w.u64(ckpt.iteration);
    w.f64s(&ckpt.trace);
    sections.push((TAG_ITERATION, w.0));

    let mut out = Writer(MAGIC.to_vec());
    out.u32(FORMAT_VERSION);
    out.u32(sections.len() as u32);
    for (tag, payload) in sections {
        out.u32(tag);
        out.u64(payload.len() as u64);
        out.0.extend_from_slice(&payload);
    }
    let crc = crc32fast::hash(&out.0);
    out.u32(crc);
    out.0
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < MAGIC.len() + 12 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::CorruptFile("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(CheckpointError::CorruptFile("checksum mismatch".into()));
    }

    let mut r = Reader::new(&body[12..]);
    let count = r.u32()?;
    let (mut hyper, mut flow, mut process, mut optimizers, mut rng) = (None, None, None, None, None);
    let (mut iteration, mut trace) = (0, Vec::new());
    for _ in 0..count {
        let tag = r.u32()?;
        let len = r.u64()? as usize;
        let payload = r.take(len)?;
        let mut s = Reader::new(payload);
        match tag {
            TAG_HYPER => hyper = Some(read_hyper(payload)?),
            TAG_FLOW => {
                flow = Some(s.f64s()?);
                s.done()?;
            }
            TAG_PROCESS => {
                process = Some(s.f64s()?);
                s.done()?;
            }
            TAG_OPTIMIZER => {
                optimizers = Some((read_optimizer(&mut s)?, read_optimizer(&mut s)?));
                s.done()?;
            }
            TAG_RNG => {
                let seed: [u8; 32] = s.array()?;
                let stream = s.u64()?;
                let word_pos = u128::from_le_bytes(s.array()?);
                s.done()?;
                let mut g = ChaCha8Rng::from_seed(seed);
                g.set_stream(stream);
                g.set_word_pos(word_pos);
                rng = Some(g);
            }
            TAG_ITERATION => {
                iteration = s.u64()?;
                trace = s.f64s()?;
                s.done()?;
            }
            other => return Err(CheckpointError::CorruptFile(format!("unknown section tag {other}"))),
        }
    }
    r.done()?;

    let missing = |what: &str| CheckpointError::CorruptFile(format!("missing {what} section"));
    let config = hyper.ok_or_else(|| missing("hyperparameter"))?;
    let flow_params = flow.ok_or_else(|| missing("flow"))?;
    let raw = RawProcess::from_flat(&process.ok_or_else(|| missing("process"))?)
        .ok_or_else(|| CheckpointError::CorruptFile("process section length".into()))?;
    // Parameters are overwritten right away, so the initializer's generator
    // is irrelevant.
    let mut stack = FlowStack::new(
        config.dim,
        config.depth,
        config.hidden,
        config.weightnorm,
        config.preprocess,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .map_err(|e| CheckpointError::CorruptFile(e.to_string()))?;
    stack
        .set_params(&flow_params)
        .map_err(|e| CheckpointError::CorruptFile(e.to_string()))?;
    let model = BrunoModel::from_parts(config, stack, raw)?;
    Ok(Checkpoint {
        model,
        optimizers,
        rng,
        iteration,
        trace,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?)
}
