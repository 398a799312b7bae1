"""Federated training loop on a synthetic low-rank regression task."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds, channel, control
from .config import ExperimentConfig
from .linalg import Matrix, gaussian_matrix, rng_stream
from .lora import (LoraAdapter, forward, init_adapter, orth_penalty,
                   orth_penalty_grad, per_rank_scores)
from .sparsify import ErrorMemory, baseline_sparsify, soft_sparsify

# stream tags; fixed so one seed drives every source of randomness independently
_TASK, _DIST, _CHAN, _SCHED, _TRAIN, _SPARS = 0, 1, 2, 3, 4, 5

_BASELINE_NAMES = {"flasc": "flasc_topq", "random": "random",
                   "het": "het_lowrank", "rankdrop": "rankdrop"}


@dataclass
class SynthTask:
    theta_p: Matrix
    group_targets: list[Matrix]     # per-group true update, rank r_true each
    noise_std: float


@dataclass
class ClientState:
    id: int
    x: Matrix
    y: Matrix
    p: float
    memory: ErrorMemory | None = None
    # error-feedback bookkeeping for the exactness / bound diagnostics
    max_delta_sq: float = 0.0
    sum_delta_b: Matrix | None = None
    sum_delta_a: Matrix | None = None
    sum_sent_b: Matrix | None = None
    sum_sent_a: Matrix | None = None


@dataclass
class RoundRecord:
    t: int
    loss: float
    grad_norm: float
    orth_penalty: float
    cov_norm: float
    O: float
    D: float
    Q: float
    gamma_total: float
    gamma_sparsification: float
    gamma_rank: float
    gamma_cov: float
    gamma_sampling: float
    selected_ids: str  # semicolon-joined


CSV_COLUMNS = ["t", "loss", "grad_norm", "orth_penalty", "cov_norm", "O", "D", "Q",
               "gamma_total", "gamma_sparsification", "gamma_rank", "gamma_cov",
               "gamma_sampling", "selected_ids"]


@dataclass
class MemoryTrace:
    """Per-round worst-case error-feedback diagnostics over selected clients."""

    t: int
    max_mem_sq: float
    lemma1_margin: float     # max over clients of |m|^2 - bound; <= 0 means bound holds
    amgm_margin: float       # max over clients of |mB mA|_F - 0.5 |m|^2


@dataclass
class RunResult:
    records: list[RoundRecord]
    mem_trace: list[MemoryTrace]
    summary: dict
    error: str | None = None


def make_task(rng: np.random.Generator, cfg: ExperimentConfig,
              ) -> tuple[SynthTask, list[ClientState]]:
    """Build the regression task and shard-partitioned client datasets.

    Group g has target Delta* + hetero_scale * Xi_g (both rank r_true); shards
    are assigned to groups round-robin, shuffled, and dealt to clients. Fewer
    shards per client concentrates each client on fewer groups.
    """
    d, ell, r = cfg.d, cfg.ell, cfg.r_true
    theta_p = gaussian_matrix(rng, d, ell, 1.0 / np.sqrt(d))

    def low_rank():
        return gaussian_matrix(rng, d, r, 1.0 / np.sqrt(d)) @ \
            gaussian_matrix(rng, r, ell, 1.0 / np.sqrt(r))

    shared = low_rank()
    targets = [shared + cfg.hetero_scale * low_rank() for _ in range(cfg.n_groups)]

    total_shards = cfg.n_clients * cfg.shards
    shard_groups = np.arange(total_shards) % cfg.n_groups
    rng.shuffle(shard_groups)
    per_shard = cfg.samples_per_client // cfg.shards

    clients = []
    for cid in range(cfg.n_clients):
        xs, ys = [], []
        for s in range(cfg.shards):
            g = int(shard_groups[cid * cfg.shards + s])
            x = rng.normal(size=(per_shard, d))
            noise = rng.normal(size=(per_shard, ell)) * cfg.noise_std
            y = x @ (theta_p + targets[g]) + noise
            xs.append(x)
            ys.append(y)
        clients.append(ClientState(id=cid, x=np.vstack(xs), y=np.vstack(ys),
                                   p=1.0 / cfg.n_clients))
    return SynthTask(theta_p, targets, cfg.noise_std), clients


def _loss_and_grads(adapter: LoraAdapter, theta_p: Matrix, x: Matrix, y: Matrix,
                    zeta: float) -> tuple[float, Matrix, Matrix]:
    """Training objective (mean squared residual / 2 + penalty) and gradients."""
    n = x.shape[0]
    c = adapter.scale
    resid = forward(adapter, theta_p, x) - y
    loss = float(np.sum(resid**2)) / (2 * n)
    xb = x @ adapter.B
    grad_b = (c / n) * (x.T @ (resid @ adapter.A.T))
    grad_a = (c / n) * (xb.T @ resid)
    if zeta > 0:
        pb, pa = orth_penalty_grad(adapter)
        loss += zeta * orth_penalty(adapter)
        grad_b += zeta * pb
        grad_a += zeta * pa
    return loss, grad_b, grad_a


def local_train(client: ClientState, global_adapter: LoraAdapter, theta_p: Matrix,
                epochs: int, eta: float, zeta: float, batch: int,
                rng: np.random.Generator) -> tuple[Matrix, Matrix]:
    """Mini-batch SGD from the broadcast adapter; returns the factor deltas."""
    adapter = global_adapter.copy()
    n = client.x.shape[0]
    initial, _, _ = _loss_and_grads(adapter, theta_p, client.x, client.y, zeta)
    floor = max(initial, 1.0)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, gb, ga = _loss_and_grads(adapter, theta_p, client.x[idx],
                                           client.y[idx], zeta)
            if not np.isfinite(loss) or loss > 1e6 * floor:
                raise RuntimeError(
                    f"client {client.id} diverged: batch loss {loss:.3e} from "
                    f"initial {initial:.3e}; lower eta")
            adapter.B -= eta * gb
            adapter.A -= eta * ga
    return adapter.B - global_adapter.B, adapter.A - global_adapter.A


def aggregate(updates: list[tuple[Matrix, Matrix]], weights: np.ndarray,
              renorm: bool = True) -> tuple[Matrix, Matrix]:
    """Factor-wise weighted average of the received updates."""
    if not updates:
        raise ValueError("nothing to aggregate")
    w = np.asarray(weights, dtype=float)
    if renorm:
        w = w / w.sum()
    agg_b = sum(wk * ub for wk, (ub, _) in zip(w, updates))
    agg_a = sum(wk * ua for wk, (_, ua) in zip(w, updates))
    return agg_b, agg_a


def covariance_diag(updates: list[tuple[Matrix, Matrix]], weights: np.ndarray,
                    ) -> tuple[Matrix, float]:
    """Aggregation discrepancy: mean of products minus product of means."""
    if not updates:
        raise ValueError("need at least one update")
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    mean_prod = sum(wk * (ub @ ua) for wk, (ub, ua) in zip(w, updates))
    mean_b = sum(wk * ub for wk, (ub, _) in zip(w, updates))
    mean_a = sum(wk * ua for wk, (_, ua) in zip(w, updates))
    cov = mean_prod - mean_b @ mean_a
    return cov, float(np.linalg.norm(cov))


def global_loss_and_grad(clients: list[ClientState], adapter: LoraAdapter,
                         theta_p: Matrix, zeta: float) -> tuple[float, float]:
    """Population-weighted full-batch loss and gradient norm at the global model."""
    loss = 0.0
    gb = np.zeros_like(adapter.B)
    ga = np.zeros_like(adapter.A)
    for cl in clients:
        lk, gbk, gak = _loss_and_grads(adapter, theta_p, cl.x, cl.y, zeta)
        loss += cl.p * lk
        gb += cl.p * gbk
        ga += cl.p * gak
    return loss, float(np.sqrt(np.sum(gb**2) + np.sum(ga**2)))


def _sparsify(cfg: ExperimentConfig, client: ClientState, delta: tuple[Matrix, Matrix],
              ratio: float, rng: np.random.Generator) -> tuple[Matrix, Matrix]:
    db, da = delta
    if cfg.sparsifier == "dense":
        sent_b, sent_a = db + client.memory.mB, da + client.memory.mA
        new_mem = ErrorMemory(np.zeros_like(db), np.zeros_like(da))
    elif cfg.sparsifier == "soft":
        sent_b, sent_a, new_mem = soft_sparsify(db, da, client.memory, ratio)
    else:
        sent_b, sent_a, new_mem = baseline_sparsify(
            _BASELINE_NAMES[cfg.sparsifier], db, da, client.memory, ratio, rng)
    if not cfg.error_feedback:
        new_mem = ErrorMemory(np.zeros_like(db), np.zeros_like(da))
    client.memory = new_mem
    return sent_b, sent_a


def run(cfg: ExperimentConfig) -> RunResult:
    """Offline rank selection followed by the online federated loop."""
    cfg.validate()
    consts = cfg.consts()
    task, clients = make_task(rng_stream(cfg.seed, _TASK), cfg)
    distances = rng_stream(cfg.seed, _DIST).uniform(cfg.dist_min, cfg.dist_max,
                                                    cfg.n_clients)
    mean_g = channel.mean_gains(cfg.seed, distances, cfg.pathloss_exp, cfg.noise_var,
                                rayleigh=cfg.rayleigh, n_draws=cfg.mc_channel_draws)
    a_coeff = control.average_delay_coeff(mean_g, cfg.bits_per_param, cfg.d, cfg.ell,
                                          cfg.bandwidth_total)

    mode, mode_arg = cfg.control_mode()
    if mode == "tsfa":
        rank, o0 = control.offline_select_rank(
            consts, mean_g, cfg.n_clients, cfg.k_per_round, cfg.bits_per_param,
            cfg.d, cfg.ell, cfg.bandwidth_total, cfg.d_th, cfg.o_min)
    elif mode == "osfa":
        rank = int(mode_arg)
        o0 = control.closed_form_ratio(cfg.n_clients, cfg.d_th, a_coeff,
                                       cfg.k_per_round, rank, cfg.o_min)
    else:
        rank, o0 = cfg.rank, float(mode_arg)

    adapter = init_adapter(rng_stream(cfg.seed, _TASK, 1), cfg.d, cfg.ell, rank,
                           cfg.alpha)
    for cl in clients:
        cl.memory = ErrorMemory.zeros(cfg.d, rank, cfg.ell)
        cl.sum_delta_b = np.zeros((cfg.d, rank))
        cl.sum_delta_a = np.zeros((rank, cfg.ell))
        cl.sum_sent_b = np.zeros((cfg.d, rank))
        cl.sum_sent_a = np.zeros((rank, cfg.ell))

    state = control.ControllerState(Q=0.0, V=cfg.v_weight, D_th=cfg.d_th,
                                    O_min=cfg.o_min, rank=rank)
    w_est, g_est = 0.0, 0.0  # running estimates when estimate_consts is on
    records: list[RoundRecord] = []
    mem_trace: list[MemoryTrace] = []
    losses: list[float] = []
    min_bw_gain = np.inf  # worst observed share * gain, for the drift constant
    error: str | None = None

    try:
        for t in range(cfg.rounds):
            draw = channel.sample_channel(rng_stream(cfg.seed, _CHAN, t), t, distances,
                                          cfg.pathloss_exp, cfg.noise_var,
                                          rayleigh=cfg.rayleigh)
            sched = channel.schedule_clients(rng_stream(cfg.seed, _SCHED, t),
                                             cfg.n_clients, cfg.k_per_round)
            sched = control.allocate_bandwidth(sched, draw)
            selected = [clients[int(k)] for k in sched.selected]

            def train_one(cl: ClientState):
                return local_train(cl, adapter, task.theta_p, cfg.epochs, cfg.eta,
                                   cfg.zeta, cfg.batch,
                                   rng_stream(cfg.seed, _TRAIN, t, cl.id))

            if cfg.workers > 1:
                with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                    deltas = list(pool.map(train_one, selected))
            else:
                deltas = [train_one(cl) for cl in selected]

            live_consts = consts
            if cfg.estimate_consts:
                for db, da in deltas:
                    scores = per_rank_scores(adapter.B + db, adapter.A + da)
                    w_est = max(w_est, float(np.sqrt(scores.max())))
                live_consts = bounds.TheoryConsts(
                    S=consts.S, W=max(w_est, 1e-9), G=max(g_est, 1e-9), H=consts.H,
                    phi=consts.phi, r_max=consts.r_max, E=consts.E, eta=consts.eta)

            if mode == "fixed":
                ratio = o0
            else:
                c_d, c_s, _ = control.slot_coeffs(
                    draw, sched, live_consts, rank, cfg.n_clients, cfg.bits_per_param,
                    cfg.d, cfg.ell, cfg.bandwidth_total)
                ratio = control.solve_ratio(state.Q, state.V, c_d, c_s, cfg.o_min)
            if cfg.sparsifier == "dense":
                ratio = 1.0

            sent = []
            max_mem_sq, lem_margin, amgm_margin = 0.0, -np.inf, -np.inf
            for cl, delta in zip(selected, deltas):
                cl.max_delta_sq = max(cl.max_delta_sq,
                                      float(np.sum(delta[0]**2) + np.sum(delta[1]**2)))
                sb, sa = _sparsify(cfg, cl, delta, ratio,
                                   rng_stream(cfg.seed, _SPARS, t, cl.id))
                sent.append((sb, sa))
                cl.sum_delta_b += delta[0]
                cl.sum_delta_a += delta[1]
                cl.sum_sent_b += sb
                cl.sum_sent_a += sa
                mem_sq = cl.memory.norm_sq()
                prod = float(np.linalg.norm(cl.memory.mB @ cl.memory.mA))
                max_mem_sq = max(max_mem_sq, mem_sq)
                lem_margin = max(lem_margin,
                                 mem_sq - bounds.lemma1_bound(ratio, cl.max_delta_sq))
                amgm_margin = max(amgm_margin, prod - 0.5 * mem_sq)
            mem_trace.append(MemoryTrace(t, max_mem_sq, lem_margin, amgm_margin))

            bits = channel.payload_bits(cfg.bits_per_param, rank, cfg.d, cfg.ell, ratio)
            delay = channel.round_delay(sched, draw, bits, cfg.bandwidth_total)
            min_bw_gain = min(min_bw_gain, float(np.min(
                sched.bandwidth[sched.selected] * draw.gains[sched.selected])))
            state.Q = control.queue_update(state.Q, delay, cfg.d_th)

            weights = np.array([cl.p for cl in selected])
            agg_b, agg_a = aggregate(sent, weights, renorm=cfg.agg_weights == "renorm")
            adapter.B += agg_b
            adapter.A += agg_a
            _, cov_norm = covariance_diag(sent, weights)

            loss, grad_norm = global_loss_and_grad(clients, adapter, task.theta_p,
                                                   cfg.zeta)
            losses.append(loss)
            if cfg.estimate_consts:
                g_est = grad_norm if g_est == 0 else 0.9 * g_est + 0.1 * grad_norm
            gamma = bounds.theorem1_gamma_term(live_consts, rank, ratio,
                                               cfg.k_per_round, cfg.n_clients)
            records.append(RoundRecord(
                t=t, loss=loss, grad_norm=grad_norm,
                orth_penalty=orth_penalty(adapter), cov_norm=cov_norm,
                O=ratio, D=delay, Q=state.Q,
                gamma_total=gamma.total,
                gamma_sparsification=gamma.sparsification_term,
                gamma_rank=gamma.rank_term, gamma_cov=gamma.cov_term,
                gamma_sampling=gamma.sampling_term,
                selected_ids=";".join(str(int(k)) for k in sched.selected)))
    except RuntimeError as exc:
        error = str(exc)

    telescope_err = 0.0
    for cl in clients:
        rb = cl.sum_sent_b + cl.memory.mB - cl.sum_delta_b
        ra = cl.sum_sent_a + cl.memory.mA - cl.sum_delta_a
        telescope_err = max(telescope_err,
                            float(np.abs(rb).max(initial=0.0)),
                            float(np.abs(ra).max(initial=0.0)))

    if records:
        init_gap = 2.0 / (cfg.eta * len(records)) * (losses[0] - min(losses))
        last = records[-1]
        final_gamma = bounds.theorem1_gamma_term(
            consts, rank, last.O, cfg.k_per_round, cfg.n_clients, init_gap=init_gap)
        gamma_summary = {
            "init_gap_proxy": final_gamma.init_gap,
            "rank": final_gamma.rank_term, "cov": final_gamma.cov_term,
            "local": final_gamma.local_term, "drift": final_gamma.drift_term,
            "sampling": final_gamma.sampling_term,
            "sparsification": final_gamma.sparsification_term,
            "total": final_gamma.total,
            "constants_mode": "estimated" if cfg.estimate_consts else "configured",
        }
    else:
        gamma_summary = {}

    summary = {
        "chosen_rank": rank,
        "initial_ratio": o0,
        "rounds_completed": len(records),
        "final_loss": records[-1].loss if records else None,
        "final_cov_norm": records[-1].cov_norm if records else None,
        "mean_cov_norm": float(np.mean([r.cov_norm for r in records])) if records else None,
        "mean_delay": float(np.mean([r.D for r in records])) if records else None,
        "mean_ratio": float(np.mean([r.O for r in records])) if records else None,
        "final_queue": records[-1].Q if records else None,
        "gamma": gamma_summary,
        "gamma_total": gamma_summary.get("total"),
        "telescope_err": telescope_err,
        "max_lemma1_margin": max((m.lemma1_margin for m in mem_trace), default=None),
        "max_amgm_margin": max((m.amgm_margin for m in mem_trace), default=None),
        "drift_bound_B": bounds.drift_bound_B(
            channel.payload_bits(cfg.bits_per_param, rank, cfg.d, cfg.ell, 1.0)
            / (cfg.bandwidth_total * min_bw_gain) if np.isfinite(min_bw_gain)
            else cfg.d_th, cfg.d_th),
        "config": cfg.to_dict(),
    }
    return RunResult(records=records, mem_trace=mem_trace, summary=summary, error=error)
