//! The round-based simulation engine: server update, broadcast, per-worker
//! double-momentum estimation, compression with error feedback, attack
//! injection, and robust aggregation.
//!
//! Per round, every honest worker refreshes its first momentum estimator
//! `v` (plain exponential average, or the variance-reduced form that
//! corrects with a paired gradient at the previous model), chains it into a
//! second estimator `u`, compresses `u - g` against its error-feedback
//! state, and transmits the compressed difference. Both endpoints advance
//! the shared state to the value of `u` on the transmitted support, which is
//! what `g <- g + c` means in exact arithmetic and keeps worker and server
//! mirrors identical to the last bit. Byzantine slots run a reference honest
//! pipeline and the configured attack decides what actually goes on the
//! wire.
//!
//! Within a round, worker steps may execute on a thread pool; every draw
//! comes from a stream derived from `(seed, worker, round, purpose)`, so the
//! schedule cannot change any result.

use crate::aggregate::{self, AggregatorSpec};
use crate::attack::{self, AttackContext, AttackSpec};
use crate::compress::{compress, CompressorSpec, SparseMessage};
use crate::data::{partition, synth_logreg, Dataset, PartitionScheme};
use crate::error::{Result, SimError};
use crate::metrics::{honest_variance, MetricsSeries, RoundRecord};
use crate::model::LogRegProblem;
use crate::par;
use crate::rng::{derive_stream, Purpose};
use crate::vector::{mean_of, Vector};

/// Which momentum recursion the workers run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoVariant {
    /// Double momentum over plain stochastic gradients.
    Dm21,
    /// Double momentum with the variance-reduced first estimator.
    VrDm21,
    /// Single momentum: the second estimator is bypassed (u = v).
    Ef21Sgdm,
}

/// Full experiment specification for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub variant: AlgoVariant,
    pub gamma: f64,
    pub eta: f64,
    pub rounds: usize,
    pub workers: usize,
    pub byzantine: usize,
    pub compressor: CompressorSpec,
    pub aggregator: AggregatorSpec,
    pub attack: AttackSpec,
    pub seed: u64,
    pub init_batch: usize,
    /// Regularization weight; `None` means `1/m` per local shard.
    pub lambda: Option<f64>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(SimError::config(format!(
                "eta = {} outside (0, 1]",
                self.eta
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(SimError::config(format!(
                "gamma = {} must be finite and >= 0",
                self.gamma
            )));
        }
        if self.rounds == 0 {
            return Err(SimError::config("rounds must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(SimError::config("need at least one worker".into()));
        }
        if 2 * self.byzantine >= self.workers {
            return Err(SimError::config(format!(
                "Byzantine count must satisfy B < n/2, got B = {}, n = {}",
                self.byzantine, self.workers
            )));
        }
        if self.init_batch == 0 {
            return Err(SimError::config("init_batch must be >= 1".into()));
        }
        self.aggregator.validate(self.workers)?;
        self.attack.validate()?;
        Ok(())
    }

    /// Number of honest workers.
    pub fn honest(&self) -> usize {
        self.workers - self.byzantine
    }

    /// Canonical key=value echo of this configuration.
    pub fn echo(&self) -> String {
        format!(
            "variant={:?} gamma={} eta={} rounds={} workers={} byzantine={} \
             compressor={:?} aggregator={:?} attack={:?} seed={} init_batch={} lambda={:?}",
            self.variant,
            self.gamma,
            self.eta,
            self.rounds,
            self.workers,
            self.byzantine,
            self.compressor,
            self.aggregator,
            self.attack,
            self.seed,
            self.init_batch,
            self.lambda,
        )
    }
}

/// Where the training data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Generated from the run seed: `m` samples, `d` features, label noise
    /// shrinking with `separation`.
    Synthetic { m: usize, d: usize, separation: f64 },
    /// A dataset supplied by the caller (e.g. parsed from LIBSVM).
    InMemory(Dataset),
}

/// One worker's local state: the momentum pair, the error-feedback mirror,
/// and its shard problem.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub v: Vector,
    pub u: Vector,
    pub g_local: Vector,
    pub problem: LogRegProblem,
    pending: Option<Result<WorkerUpdate>>,
}

/// Server-side state.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub x: Vector,
    pub g_global: Vector,
    pub g_table: Vec<Vector>,
    pub round: usize,
}

/// A worker's outgoing transmission: the compressed difference message plus
/// the post-update values of the shared state on its support.
#[derive(Debug, Clone)]
pub struct WorkerUpdate {
    pub msg: SparseMessage,
    new_values: Vec<f64>,
}

impl WorkerUpdate {
    /// Advance an error-feedback mirror by this update.
    pub fn apply_to(&self, state: &mut Vector) {
        for (&(j, _), &nv) in self.msg.entries().iter().zip(&self.new_values) {
            state[j as usize] = nv;
        }
    }
}

/// Whole simulation state between rounds.
#[derive(Debug, Clone)]
pub struct SimState {
    pub server: ServerState,
    pub workers: Vec<WorkerState>,
    pub bytes_up: u64,
    dim: usize,
}

impl SimState {
    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Exponential moving average in place: `dst = (1 - eta) dst + eta src`.
fn ema_update(dst: &mut Vector, eta: f64, src: &Vector) {
    let keep = 1.0 - eta;
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d = keep * *d + eta * *s;
    }
}

/// One honest worker step: momentum updates, compression, error-feedback
/// advance. Reads nothing but its own state, the broadcast models, and its
/// private streams.
pub fn honest_step(
    w: &mut WorkerState,
    x_new: &Vector,
    x_old: &Vector,
    cfg: &RunConfig,
    worker_id: u64,
    round: u64,
) -> Result<WorkerUpdate> {
    let mut sample_rng = derive_stream(cfg.seed, worker_id, round, Purpose::Sample);
    let idx = sample_rng.index(w.problem.n_samples());
    match cfg.variant {
        AlgoVariant::Dm21 | AlgoVariant::Ef21Sgdm => {
            let grad = w.problem.stoch_grad(x_new, idx)?;
            ema_update(&mut w.v, cfg.eta, &grad);
        }
        AlgoVariant::VrDm21 => {
            let (grad_new, grad_old) = w.problem.stoch_grad_pair(x_new, x_old, idx)?;
            let keep = 1.0 - cfg.eta;
            for ((v, gn), go) in w
                .v
                .as_mut_slice()
                .iter_mut()
                .zip(grad_new.as_slice())
                .zip(grad_old.as_slice())
            {
                *v = gn + keep * (*v - go);
            }
        }
    }
    match cfg.variant {
        AlgoVariant::Ef21Sgdm => w.u = w.v.clone(),
        _ => ema_update(&mut w.u, cfg.eta, &w.v),
    }
    let diff = w.u.sub(&w.g_local)?;
    let mut compress_rng = derive_stream(cfg.seed, worker_id, round, Purpose::Compress);
    let msg = compress(cfg.compressor, &diff, &mut compress_rng)?;
    let new_values: Vec<f64> = msg
        .entries()
        .iter()
        .map(|&(j, _)| w.u[j as usize])
        .collect();
    let update = WorkerUpdate { msg, new_values };
    update.apply_to(&mut w.g_local);
    Ok(update)
}

/// Initialize the simulation: zero model, one batched stochastic gradient
/// per worker as the momentum triple, attack-controlled round-0 table
/// entries for Byzantine slots, then one robust aggregation.
pub fn init(cfg: &RunConfig, shards: Vec<Dataset>) -> Result<SimState> {
    cfg.validate()?;
    if shards.len() != cfg.workers {
        return Err(SimError::config(format!(
            "expected {} shards, got {}",
            cfg.workers,
            shards.len()
        )));
    }
    let dim = shards[0].dim();
    crate::compress::alpha_of(cfg.compressor, dim)?;
    let honest = cfg.honest();
    let x0 = Vector::zeros(dim);

    let mut workers = Vec::with_capacity(cfg.workers);
    for (i, shard) in shards.into_iter().enumerate() {
        let shard = if i >= honest && matches!(cfg.attack, AttackSpec::LabelFlip) {
            attack::poison_labels(&shard)
        } else {
            shard
        };
        if shard.len() < cfg.init_batch {
            return Err(SimError::config(format!(
                "worker {i} shard of {} samples cannot serve init_batch = {}",
                shard.len(),
                cfg.init_batch
            )));
        }
        let problem = LogRegProblem::new(shard, cfg.lambda)?;
        let mut rng = derive_stream(cfg.seed, i as u64, 0, Purpose::Sample);
        let indices = rng.sample_indices(problem.n_samples(), cfg.init_batch);
        let g0 = problem.batch_grad(&x0, &indices)?;
        workers.push(WorkerState {
            v: g0.clone(),
            u: g0.clone(),
            g_local: g0,
            problem,
            pending: None,
        });
    }

    // Round-0 table: honest slots report their gradient; Byzantine slots
    // report whatever the attack crafts from full knowledge of the others.
    let mut g_table: Vec<Vector> = workers[..honest].iter().map(|w| w.g_local.clone()).collect();
    if cfg.byzantine > 0 {
        let ctx = AttackContext {
            honest_messages: g_table.clone(),
            reference_messages: workers[honest..].iter().map(|w| w.g_local.clone()).collect(),
        };
        let byz = attack::byz_messages(cfg.attack, &ctx, cfg.byzantine)?;
        g_table.extend(byz);
    }
    // Initialization sends dense vectors: 8 bytes per coordinate.
    let bytes_up = (cfg.workers * dim * 8) as u64;

    let g_global = aggregate::aggregate(&cfg.aggregator, &g_table)?;
    Ok(SimState {
        server: ServerState {
            x: x0,
            g_global,
            g_table,
            round: 0,
        },
        workers,
        bytes_up,
        dim,
    })
}

/// Advance the simulation by one round and report its metrics.
pub fn round(state: &mut SimState, cfg: &RunConfig) -> Result<RoundRecord> {
    let honest = cfg.honest();
    let x_old = state.server.x.clone();
    let mut x_new = x_old.clone();
    x_new.axpy(-cfg.gamma, &state.server.g_global)?;
    state.server.x = x_new.clone();
    state.server.round += 1;
    let t = state.server.round;

    // Every slot runs its (reference) honest pipeline.
    par::for_each_mut(&mut state.workers, |i, w| {
        w.pending = Some(honest_step(w, &x_new, &x_old, cfg, i as u64, t as u64));
    });
    let mut updates = Vec::with_capacity(cfg.workers);
    for w in state.workers.iter_mut() {
        updates.push(w.pending.take().expect("step ran")?);
    }

    let honest_wire: Vec<Vector> = updates[..honest].iter().map(|u| u.msg.densify()).collect();

    // Honest transmissions advance the server mirrors exactly as the worker
    // side did.
    for (i, update) in updates[..honest].iter().enumerate() {
        update.apply_to(&mut state.server.g_table[i]);
        state.bytes_up += update.msg.byte_cost();
    }

    if cfg.byzantine > 0 {
        if cfg.attack.is_passthrough() {
            // Protocol-following Byzantine slots (none, or label flip):
            // identical treatment to honest workers.
            for (b, update) in updates[honest..].iter().enumerate() {
                update.apply_to(&mut state.server.g_table[honest + b]);
                state.bytes_up += update.msg.byte_cost();
            }
        } else {
            let ctx = AttackContext {
                honest_messages: honest_wire.clone(),
                reference_messages: updates[honest..].iter().map(|u| u.msg.densify()).collect(),
            };
            let crafted = attack::byz_messages(cfg.attack, &ctx, cfg.byzantine)?;
            for (b, c) in crafted.iter().enumerate() {
                let wire = SparseMessage::from_nonzeros(c);
                let mirror = &mut state.server.g_table[honest + b];
                for &(j, delta) in wire.entries() {
                    mirror[j as usize] += delta;
                }
                state.bytes_up += wire.byte_cost();
            }
        }
    }

    state.server.g_global = aggregate::aggregate(&cfg.aggregator, &state.server.g_table)?;
    compute_record(state, cfg, &honest_wire)
}

/// Metrics at the current state: full-objective quantities over the honest
/// shards, message dispersion, momentum deviation, heterogeneity, bytes.
fn compute_record(state: &SimState, cfg: &RunConfig, honest_wire: &[Vector]) -> Result<RoundRecord> {
    let honest = cfg.honest();
    let x = &state.server.x;
    let per_worker: Vec<Result<(f64, Vector)>> =
        par::map_indexed(honest, |i| state.workers[i].problem.loss_and_grad(x));
    let mut losses = Vec::with_capacity(honest);
    let mut grads = Vec::with_capacity(honest);
    for r in per_worker {
        let (l, g) = r?;
        losses.push(l);
        grads.push(g);
    }
    let loss = losses.iter().sum::<f64>() / honest as f64;
    let grad = mean_of(&grads)?;
    let grad_norm_sq = grad.norm_sq();
    let momentum_dev = (0..honest)
        .map(|i| state.workers[i].v.dist_sq(&grads[i]))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum::<f64>()
        / honest as f64;
    let het_hat = grads
        .iter()
        .map(|gi| gi.dist_sq(&grad))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum::<f64>()
        / honest as f64;
    let momenta: Vec<Vector> = (0..honest).map(|i| state.workers[i].v.clone()).collect();
    let msg_variance = honest_variance(&momenta)?;
    let msg_variance_wire = if honest_wire.is_empty() {
        // Round 0: the wire carried the dense initial gradients.
        honest_variance(&state.server.g_table[..honest].to_vec())?
    } else {
        honest_variance(honest_wire)?
    };
    let honest_idx: Vec<usize> = (0..honest).collect();
    let kappa_hat =
        aggregate::empirical_kappa(&state.server.g_global, &state.server.g_table, &honest_idx)?;
    Ok(RoundRecord {
        t: state.server.round,
        loss,
        grad_norm_sq,
        msg_variance,
        momentum_dev,
        het_hat,
        bytes_up: state.bytes_up,
        kappa_hat,
        msg_variance_wire,
    })
}

/// Run a full experiment: materialize data, partition, initialize, iterate
/// `rounds` times, and sample one iterate uniformly for the returned-point
/// diagnostic.
pub fn run(
    cfg: &RunConfig,
    source: &DataSource,
    scheme: PartitionScheme,
) -> Result<MetricsSeries> {
    cfg.validate()?;
    let dataset = match source {
        DataSource::Synthetic { m, d, separation } => {
            let mut rng = derive_stream(cfg.seed, 0, 0, Purpose::SynthData);
            synth_logreg(*m, *d, *separation, &mut rng)?
        }
        DataSource::InMemory(data) => data.clone(),
    };
    let mut part_rng = derive_stream(cfg.seed, 0, 0, Purpose::Partition);
    let shards = partition(&dataset, cfg.workers, scheme, &mut part_rng)?;
    let mut state = init(cfg, shards)?;

    let mut xhat_rng = derive_stream(cfg.seed, 0, 0, Purpose::XhatPick);
    let xhat_round = xhat_rng.index(cfg.rounds);
    let mut xhat: Option<Vector> = None;
    if xhat_round == 0 {
        xhat = Some(state.server.x.clone());
    }

    let mut records = Vec::with_capacity(cfg.rounds + 1);
    records.push(compute_record(&state, cfg, &[])?);
    for t in 0..cfg.rounds {
        records.push(round(&mut state, cfg)?);
        if t + 1 == xhat_round {
            xhat = Some(state.server.x.clone());
        }
    }

    let xhat = xhat.expect("xhat round within range");
    let honest = cfg.honest();
    let grads: Vec<Result<Vector>> =
        par::map_indexed(honest, |i| state.workers[i].problem.full_grad(&xhat));
    let grads = grads.into_iter().collect::<Result<Vec<_>>>()?;
    let xhat_grad_norm_sq = mean_of(&grads)?.norm_sq();

    Ok(MetricsSeries {
        records,
        config_echo: cfg.echo(),
        xhat_grad_norm_sq,
    })
}
