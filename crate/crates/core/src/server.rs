//! Server side of the federated protocol and the epoch loop that drives the
//! simulated clients.
//!
//! One epoch: every client solves for its embedding against the current
//! item matrix, computes its item gradient and uploads `k` perturbed reports;
//! the proxy strips and shuffles them; the server counts `+B`/`-B` per cell,
//! forms the mean-gradient estimate and takes `S` regularized descent steps.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use log::debug;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::eval::{hit_ratio, Metrics, RankingTask, DEFAULT_KS};
use crate::ldp::{perturb_k, scale_constant, MechanismParams, REPORT_WIRE_BYTES};
use crate::mf::{
    client_gradient, implicit_loss, update_user_embedding_with_gram, HyperParams, ItemGradient,
    ItemMatrix, Matrix, ReportScaling, UserEmbedding,
};
use crate::proxy::{strip_and_shuffle, AnonymousReportBatch, ClientMessage};
use crate::rng::{stream, TAG_CLIENT, TAG_INIT, TAG_RANDOM_MODEL, TAG_SHUFFLE};

/// Half-width of the uniform item-matrix initialization.
pub const INIT_SCALE: f64 = 0.01;

/// Bytes per real on the download path.
pub const REAL_BYTES: u64 = 4;

const CHECKPOINT_MAGIC: &[u8; 4] = b"FMF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Perturbed reports through the proxy.
    Ldp,
    /// Raw dense gradients averaged exactly.
    NonPrivate,
    /// No training; random user and item vectors.
    Random,
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainingMode::Ldp => "ldp",
            TrainingMode::NonPrivate => "nonprivate",
            TrainingMode::Random => "random",
        })
    }
}

impl FromStr for TrainingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ldp" => Ok(TrainingMode::Ldp),
            "nonprivate" | "non_private" | "mf-np" => Ok(TrainingMode::NonPrivate),
            "random" => Ok(TrainingMode::Random),
            _ => Err(format!(
                "unknown mode `{s}` (expected ldp, nonprivate or random)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub metrics: Metrics,
    pub loss: f64,
    /// Per client, this epoch, as sent on the wire.
    pub upload_bytes: u64,
    /// Per client, this epoch.
    pub download_bytes: u64,
}

/// Everything the server holds. Contains no user embeddings or raw client
/// gradients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServerState {
    pub item_matrix: ItemMatrix,
    pub epoch: u32,
    pub hp: HyperParams,
    pub mech: MechanismParams,
    pub metric_trace: Vec<EpochRecord>,
    pub rng_seed: u64,
    pub reports_received: u64,
}

impl ServerState {
    /// Item matrix uniform in `[-INIT_SCALE, INIT_SCALE]`, seeded from the
    /// master seed.
    pub fn init(n_items: usize, hp: HyperParams, rng_seed: u64) -> Result<Self> {
        hp.validate()?;
        let mech = MechanismParams::new(hp.epsilon, n_items, hp.n_factors, hp.k)?;
        let mut rng = stream(rng_seed, &[TAG_INIT]);
        Ok(Self {
            item_matrix: Matrix::random_uniform(n_items, hp.n_factors, INIT_SCALE, &mut rng),
            epoch: 0,
            hp,
            mech,
            metric_trace: Vec::new(),
            rng_seed,
            reports_received: 0,
        })
    }
}

/// Exact per-cell counts of `+B` and `-B` reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellCounts {
    pub pos: Vec<u64>,
    pub neg: Vec<u64>,
}

impl CellCounts {
    pub fn from_batch(batch: &AnonymousReportBatch, cells: usize) -> Result<Self> {
        let mut pos = vec![0u64; cells];
        let mut neg = vec![0u64; cells];
        for r in &batch.reports {
            let c = r.cell_index as usize;
            if c >= cells {
                return Err(Error::Decode {
                    index: r.cell_index,
                    cells,
                });
            }
            if r.sign {
                pos[c] += 1;
            } else {
                neg[c] += 1;
            }
        }
        Ok(Self { pos, neg })
    }

    pub fn total(&self) -> u64 {
        self.pos.iter().sum::<u64>() + self.neg.iter().sum::<u64>()
    }
}

/// Mean-gradient estimate: `B (pos_c - neg_c) / (N k)` per cell, i.e. each
/// user's `k` decoded reports averaged, then averaged over users.
pub fn aggregate(
    batch: &AnonymousReportBatch,
    n_users: usize,
    mech: &MechanismParams,
) -> Result<ItemGradient> {
    let expected = n_users * mech.k;
    if batch.reports.len() != expected {
        return Err(Error::BatchLength {
            expected,
            actual: batch.reports.len(),
        });
    }
    let counts = CellCounts::from_batch(batch, mech.cells())?;
    let b = scale_constant(mech)?;
    let denom = expected as f64;
    let values = counts
        .pos
        .iter()
        .zip(&counts.neg)
        .map(|(&p, &n)| b * (p as i64 - n as i64) as f64 / denom)
        .collect();
    Matrix::from_vec(mech.n_items, mech.n_factors, values)
}

/// `S` steps of `V ← V − γ(∇ + 2λV)` with the same `∇` each step.
pub fn apply_update(
    v: &ItemMatrix,
    grad: &ItemGradient,
    hp: &HyperParams,
    epoch: u32,
) -> Result<ItemMatrix> {
    if !v.same_shape(grad) {
        return Err(Error::Shape(format!(
            "item matrix {}x{} vs gradient {}x{}",
            v.n_rows(),
            v.n_cols(),
            grad.n_rows(),
            grad.n_cols()
        )));
    }
    let mut out = v.clone();
    let decay = 2.0 * hp.reg;
    for _ in 0..hp.inner_steps {
        for (w, g) in out.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *w -= hp.learning_rate * (g + decay * *w);
        }
    }
    if !out.is_finite() {
        return Err(Error::Diverged {
            epoch,
            partial_trace: Vec::new(),
        });
    }
    Ok(out)
}

/// Closed-form embeddings of every user against `v`. Runs client side.
pub fn client_embeddings(
    v: &ItemMatrix,
    train: &InteractionDataset,
    hp: &HyperParams,
) -> Result<Vec<UserEmbedding>> {
    let gram = v.gram();
    (0..train.n_users())
        .into_par_iter()
        .map(|u| update_user_embedding_with_gram(v, &gram, &train.items_of(u), hp))
        .collect()
}

fn client_message(
    state: &ServerState,
    gram: &nalgebra::DMatrix<f64>,
    train: &InteractionDataset,
    user: usize,
) -> Result<ClientMessage> {
    let items = train.items_of(user);
    let x = update_user_embedding_with_gram(&state.item_matrix, gram, &items, &state.hp)?;
    let grad = client_gradient(&x, &state.item_matrix, &items, &state.hp);
    let mut rng = stream(
        state.rng_seed,
        &[TAG_CLIENT, user as u64, state.epoch as u64],
    );
    Ok(ClientMessage {
        client_id: user as u64,
        epoch: state.epoch,
        reports: perturb_k(&grad, &state.mech, &mut rng)?,
    })
}

/// Every client's upload for the current epoch, already through the proxy.
pub fn collect_reports(
    state: &ServerState,
    train: &InteractionDataset,
) -> Result<AnonymousReportBatch> {
    let gram = state.item_matrix.gram();
    let messages: Vec<ClientMessage> = (0..train.n_users())
        .into_par_iter()
        .map(|u| client_message(state, &gram, train, u))
        .collect::<Result<_>>()?;
    let mut rng = stream(state.rng_seed, &[TAG_SHUFFLE, state.epoch as u64]);
    strip_and_shuffle(messages, &mut rng)
}

/// One federated epoch with perturbed reports. Under `ReportScaling::Sum`
/// the step uses `k` times the [`aggregate`] estimate, i.e. each user's `k`
/// decoded reports are summed rather than averaged.
pub fn run_epoch(mut state: ServerState, train: &InteractionDataset) -> Result<ServerState> {
    if state.epoch >= state.hp.epochs {
        return Err(Error::Param(format!(
            "epoch {} beyond configured {}",
            state.epoch, state.hp.epochs
        )));
    }
    check_dims(&state, train)?;
    let batch = collect_reports(&state, train)?;
    let mut grad = aggregate(&batch, train.n_users(), &state.mech)?;
    if state.hp.report_scaling == ReportScaling::Sum {
        let k = state.mech.k as f64;
        for g in grad.as_mut_slice() {
            *g *= k;
        }
    }
    state.reports_received += batch.reports.len() as u64;
    state.item_matrix = apply_update(&state.item_matrix, &grad, &state.hp, state.epoch)?;
    state.epoch += 1;
    debug!(
        "epoch {} done, {} reports",
        state.epoch,
        batch.reports.len()
    );
    Ok(state)
}

// Users are summed in fixed-size chunks, then chunks in order, so the
// float result does not depend on the thread pool.
const SUM_CHUNK: usize = 64;

/// One epoch of the non-private baseline: exact mean of raw client
/// gradients.
pub fn run_epoch_nonprivate(
    mut state: ServerState,
    train: &InteractionDataset,
) -> Result<ServerState> {
    if state.epoch >= state.hp.epochs {
        return Err(Error::Param(format!(
            "epoch {} beyond configured {}",
            state.epoch, state.hp.epochs
        )));
    }
    check_dims(&state, train)?;
    let v = &state.item_matrix;
    let gram = v.gram();
    let hp = state.hp;
    let users: Vec<usize> = (0..train.n_users()).collect();
    let partials: Vec<ItemGradient> = users
        .par_chunks(SUM_CHUNK)
        .map(|chunk| {
            let mut acc = Matrix::zeros(v.n_rows(), v.n_cols());
            for &u in chunk {
                let items = train.items_of(u);
                let x = update_user_embedding_with_gram(v, &gram, &items, &hp)?;
                let g = client_gradient(&x, v, &items, &hp);
                for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *a += b;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut mean = Matrix::zeros(v.n_rows(), v.n_cols());
    for p in &partials {
        for (a, b) in mean.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *a += b;
        }
    }
    let n = train.n_users() as f64;
    for a in mean.as_mut_slice() {
        *a /= n;
    }
    state.item_matrix = apply_update(v, &mean, &hp, state.epoch)?;
    state.epoch += 1;
    Ok(state)
}

fn check_dims(state: &ServerState, train: &InteractionDataset) -> Result<()> {
    if state.item_matrix.n_rows() != train.n_items() {
        return Err(Error::Shape(format!(
            "item matrix has {} rows, dataset {} items",
            state.item_matrix.n_rows(),
            train.n_items()
        )));
    }
    Ok(())
}

/// Held-out tasks used to score the model after each evaluated epoch.
#[derive(Debug, Clone, Copy)]
pub struct EvalSet<'a> {
    pub tasks: &'a [RankingTask],
    pub ks: &'a [usize],
    /// Evaluate after every `every`-th epoch (and always after the last).
    pub every: u32,
}

impl<'a> EvalSet<'a> {
    pub fn new(tasks: &'a [RankingTask]) -> Self {
        Self {
            tasks,
            ks: &DEFAULT_KS,
            every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainingConfig {
    pub hp: HyperParams,
    pub mode: TrainingMode,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub state: ServerState,
    /// Client-side vectors. Not part of anything the server serializes.
    pub embeddings: Vec<UserEmbedding>,
}

impl TrainingOutcome {
    pub fn trace(&self) -> &[EpochRecord] {
        &self.state.metric_trace
    }

    pub fn final_metrics(&self) -> Option<&Metrics> {
        self.state.metric_trace.last().map(|r| &r.metrics)
    }
}

/// Per-client traffic for one epoch: `(upload, download)` in bytes.
pub fn epoch_traffic(mode: TrainingMode, hp: &HyperParams, n_items: usize) -> (u64, u64) {
    let dense = (n_items * hp.n_factors) as u64 * REAL_BYTES;
    match mode {
        TrainingMode::Ldp => ((hp.k * REPORT_WIRE_BYTES) as u64, dense),
        TrainingMode::NonPrivate => (dense, dense),
        TrainingMode::Random => (0, 0),
    }
}

fn evaluate(
    state: &ServerState,
    train: &InteractionDataset,
    eval: &EvalSet<'_>,
    xs: &[UserEmbedding],
    mode: TrainingMode,
) -> Result<EpochRecord> {
    let metrics = hit_ratio(eval.tasks, xs, &state.item_matrix, eval.ks)?;
    let loss = implicit_loss(xs, &state.item_matrix, train, &state.hp);
    let (upload_bytes, download_bytes) = epoch_traffic(mode, &state.hp, train.n_items());
    Ok(EpochRecord {
        epoch: state.epoch,
        metrics,
        loss,
        upload_bytes,
        download_bytes,
    })
}

/// Runs `hp.epochs` epochs in the configured mode. When `eval` is given,
/// users re-solve their embeddings against the new item matrix and HR@K and
/// the training loss are appended to the trace.
pub fn run_training(
    train: &InteractionDataset,
    eval: Option<&EvalSet<'_>>,
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome> {
    let mut state = ServerState::init(train.n_items(), cfg.hp, cfg.seed)?;

    if cfg.mode == TrainingMode::Random {
        let embeddings: Vec<UserEmbedding> = (0..train.n_users())
            .map(|u| {
                let mut rng = stream(cfg.seed, &[TAG_RANDOM_MODEL, u as u64]);
                let m = Matrix::random_uniform(1, cfg.hp.n_factors, 1.0, &mut rng);
                UserEmbedding(m.as_slice().to_vec())
            })
            .collect();
        if let Some(e) = eval {
            let rec = evaluate(&state, train, e, &embeddings, cfg.mode)?;
            state.metric_trace.push(rec);
        }
        return Ok(TrainingOutcome { state, embeddings });
    }

    while state.epoch < cfg.hp.epochs {
        let epoch = state.epoch;
        let trace = std::mem::take(&mut state.metric_trace);
        let step = match cfg.mode {
            TrainingMode::Ldp => run_epoch(state, train),
            _ => run_epoch_nonprivate(state, train),
        };
        state = match step {
            Ok(mut s) => {
                s.metric_trace = trace;
                s
            }
            Err(Error::Diverged { .. }) => {
                return Err(Error::Diverged {
                    epoch,
                    partial_trace: trace,
                })
            }
            Err(e) => return Err(e),
        };
        if let Some(e) = eval {
            let last = state.epoch == cfg.hp.epochs;
            if last || state.epoch % e.every.max(1) == 0 {
                let xs = client_embeddings(&state.item_matrix, train, &state.hp)?;
                let rec = evaluate(&state, train, e, &xs, cfg.mode)?;
                debug!(
                    "epoch {} hr@10 {:?} loss {:.4}",
                    rec.epoch,
                    rec.metrics.hr_at(10),
                    rec.loss
                );
                state.metric_trace.push(rec);
            }
        }
    }

    let embeddings = client_embeddings(&state.item_matrix, train, &state.hp)?;
    Ok(TrainingOutcome { state, embeddings })
}

/// Same loop with raw gradients, regardless of `cfg.mode`.
pub fn run_training_nonprivate(
    train: &InteractionDataset,
    eval: Option<&EvalSet<'_>>,
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome> {
    run_training(
        train,
        eval,
        &TrainingConfig {
            mode: TrainingMode::NonPrivate,
            ..*cfg
        },
    )
}

/// Per-client communication for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommCost {
    pub download_per_epoch: u64,
    /// Four bytes per `(cell, sign)` tuple.
    pub upload_per_epoch: u64,
    /// Five bytes per tuple as actually encoded.
    pub upload_per_epoch_wire: u64,
    /// Four bytes plus one bit per tuple.
    pub upload_bits_per_epoch: u64,
    pub epochs: u32,
    pub download_total: u64,
    pub upload_total: u64,
    pub upload_total_wire: u64,
}

pub fn comm_cost(hp: &HyperParams, n_items: usize) -> CommCost {
    let download_per_epoch = (n_items * hp.n_factors) as u64 * REAL_BYTES;
    let k = hp.k as u64;
    let upload_per_epoch = 4 * k;
    let upload_per_epoch_wire = REPORT_WIRE_BYTES as u64 * k;
    let t = u64::from(hp.epochs);
    CommCost {
        download_per_epoch,
        upload_per_epoch,
        upload_per_epoch_wire,
        upload_bits_per_epoch: 33 * k,
        epochs: hp.epochs,
        download_total: download_per_epoch * t,
        upload_total: upload_per_epoch * t,
        upload_total_wire: upload_per_epoch_wire * t,
    }
}

/// Item matrix checkpoint: `FMF1`, `M` and `F` as `u32` LE, then `M·F`
/// `f64` LE row-major.
pub fn write_checkpoint<W: Write>(v: &ItemMatrix, mut w: W) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(v.n_rows() as u32).to_le_bytes())?;
    w.write_all(&(v.n_cols() as u32).to_le_bytes())?;
    for x in v.as_slice() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ItemMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: format!("bad checkpoint magic {magic:?}"),
        });
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let m = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let f = u32::from_le_bytes(word) as usize;
    let mut values = Vec::with_capacity(m * f);
    let mut buf = [0u8; 8];
    for _ in 0..m * f {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Matrix::from_vec(m, f, values)
}
