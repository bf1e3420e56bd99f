"""Stacked training of L separable modules: forward training then backward training.

Each outer epoch runs

1. a forward sweep over modules ``1..L-1``: reset ``U_t = I``, propagate the
   incoming features once, then fit ``W_t`` by mini-batch steps on the module's
   own loss (plus ``eta`` times the backward term from the second epoch on);
2. the last module, fitted jointly in ``W_L`` and ``U_L``;
3. ``bt_rounds`` backward sweeps ``t = L-1..1``: module ``t+1`` publishes the
   expected input ``Z_{t+1} = psi(X_{t+1} U_{t+1})`` and module ``t`` fits
   ``(W_t, U_t)`` on its own loss plus ``eta * mean ||H_t - Z_{t+1}||^2``.

Because every module is separable, a step only reads rows of the cached
propagated input, so mini-batches involve no neighbour sampling.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, ContractError, NumericError, ParseError
from .graph import PROP_KINDS, Propagator, normalize_gcn
from .losses import LossValueGrad, bt_loss, chain_to_params, gae_loss, softmax_ce_loss
from .module import (ACTIVATIONS, PSI_KINDS, SeparableModule, expected_features, forward,
                     init_module, preprocess)
from .optim import OptimState, apply_update, batch_iterator

log = logging.getLogger(__name__)

LOSS_KINDS = ("gae", "classification")
_PHASE_CODE = {"FT": 0, "BT": 1, "EVAL": 2}


@dataclass
class StackConfig:
    dims: list = field(default_factory=lambda: [0, 128, 64])
    eta: float = 1e3
    epochs: int = 100
    inner_iters: int | None = None
    inner_passes: int = 1
    batch_size: int = 128
    lr: float = 1e-3
    loss_kind: str = "gae"
    prop_kind: str = "gcn_first_order"
    prop_m: int | None = None
    prop_alpha: float | None = None
    activations: list | None = None
    seed: int = 0
    bt_rounds: int = 5
    optimizer: str = "adam"
    weight_decay: float = 0.0
    psi: str = "identity"
    track_final_loss: bool = True
    persist_optimizer: bool = True

    @property
    def num_modules(self) -> int:
        return len(self.dims) - 1

    def module_activations(self) -> list[str]:
        if self.activations:
            return list(self.activations)
        L = self.num_modules
        if self.loss_kind == "gae":
            return ["relu"] * (L - 1) + ["linear"]
        return ["relu"] * L

    def iters_per_visit(self, n: int) -> int:
        if self.inner_iters is not None:
            return int(self.inner_iters)
        return self.inner_passes * math.ceil(n / self.batch_size)

    def validate(self, data: Dataset | None = None) -> None:
        if len(self.dims) < 2:
            raise ConfigError("dims must list the input width and at least one module width")
        if any(int(d) < 1 for d in self.dims):
            raise ConfigError(f"all dims must be >= 1, got {self.dims}")
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")
        if self.epochs < 1 or self.bt_rounds < 0 or self.batch_size < 1 or self.inner_passes < 1:
            raise ConfigError("epochs, batch_size, inner_passes must be >= 1 and bt_rounds >= 0")
        if self.inner_iters is not None and self.inner_iters < 1:
            raise ConfigError("inner_iters must be >= 1")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.prop_kind not in PROP_KINDS:
            raise ConfigError(f"prop_kind must be one of {PROP_KINDS}")
        if self.psi not in PSI_KINDS:
            raise ConfigError(f"psi must be one of {PSI_KINDS}")
        acts = self.module_activations()
        if len(acts) != self.num_modules or any(a not in ACTIVATIONS for a in acts):
            raise ConfigError(f"need {self.num_modules} activations from {ACTIVATIONS}, got {acts}")
        if data is None:
            return
        if data.features.shape[1] != self.dims[0]:
            raise ConfigError(
                f"dims[0] = {self.dims[0]} but the dataset has {data.features.shape[1]} feature columns"
            )
        if self.loss_kind == "classification":
            if data.labels is None or data.split is None or data.split["train"].size == 0:
                raise ConfigError("classification needs labels and a non-empty train split")
        if self.loss_kind == "gae" and data.graph.nnz == 0:
            raise ConfigError("the GAE loss needs at least one edge")


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)  # (epoch, module, phase, iter, loss, wall_ms)
    final_loss: list = field(default_factory=list)  # (epoch, loss of the last module)
    preprocess_ms: float = 0.0

    @property
    def updates(self) -> int:
        return len(self.records)

    def losses(self, module=None, phase=None) -> np.ndarray:
        return np.array([r[4] for r in self.records
                         if (module is None or r[1] == module) and (phase is None or r[2] == phase)])

    def wall_ms(self) -> np.ndarray:
        return np.array([r[5] for r in self.records])

    def to_csv(self, with_wall: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["epoch", "module", "phase", "iter", "loss"] + (["wall_ms"] if with_wall else [])
        w.writerow(head)
        for e, t, ph, it, loss, ms in self.records:
            row = [e, t, ph, it, repr(loss)]
            if with_wall:
                row.append(f"{ms:.6f}")
            w.writerow(row)
        return buf.getvalue()

    def timing_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "module", "phase", "iter", "wall_ms"])
        for e, t, ph, it, _, ms in self.records:
            w.writerow([e, t, ph, it, f"{ms:.6f}"])
        return buf.getvalue()


@dataclass
class Supervision:
    kind: str
    graph: object = None
    pos_weight: float = 1.0
    labels: np.ndarray | None = None
    train_mask: np.ndarray | None = None

    @classmethod
    def from_dataset(cls, kind: str, data: Dataset) -> "Supervision":
        if kind == "gae":
            n, nnz = data.graph.n, data.graph.nnz
            return cls(kind, graph=data.graph, pos_weight=(n * n - nnz) / max(nnz, 1))
        mask = np.zeros(data.n, dtype=bool)
        mask[data.split["train"]] = True
        return cls(kind, labels=data.labels, train_mask=mask)


def build_propagator(data: Dataset, kind="gcn_first_order", m=None, alpha=None) -> Propagator:
    return normalize_gcn(data.graph).with_kind(kind, m, alpha)


def ft_loss_for(module: SeparableModule, batch: np.ndarray, h_batch: np.ndarray, sup: Supervision):
    """Module loss on one batch: ``(value, grad_h, grad_r)``, or ``None`` to skip the step.

    GAE reconstructs the block ``A[B, B]`` (unit diagonal). Classification uses
    the module's own head and only the training nodes present in the batch.
    """
    if sup.kind == "gae":
        if batch.shape[0] < 2:
            return None
        adj = (sup.graph.block(batch) > 0).astype(np.float64)
        np.fill_diagonal(adj, 1.0)
        value, grad_h = gae_loss(h_batch, adj, sup.pos_weight)
        return value, grad_h, None
    mask = sup.train_mask[batch]
    if not mask.any():
        return None
    value, g_sel, grad_r = softmax_ce_loss(h_batch[mask], module.r, sup.labels[batch[mask]])
    grad_h = np.zeros_like(h_batch)
    grad_h[mask] = g_sel
    return value, grad_h, grad_r


def module_objective(module, x_prop, batch, sup, use_u, eta=0.0, z=None):
    """``L_FT + eta * L_BT`` on ``batch`` with gradients for W, U (if ``use_u``) and R."""
    xr = x_prop[batch]
    h = forward(module, xr, use_u)
    ft = ft_loss_for(module, batch, h, sup)
    if ft is None:
        return None
    value, grad_h, grad_r = ft
    if eta > 0 and z is not None:
        bv, bg = bt_loss(h, z[batch])
        value = value + eta * bv
        grad_h = grad_h + eta * bg
    return chain_to_params(grad_h, module, xr, use_u, value, grad_r)


def accumulated_gradient(module, x_prop, batches, sup, use_u, eta=0.0, z=None) -> LossValueGrad:
    """Sum of per-batch gradients, each weighted by its share of the full-graph mean.

    For row-decomposable objectives (classification and the backward term) this
    reproduces the full-batch gradient; the GAE block loss is not row-decomposable.
    """
    if sup.kind == "gae" and batches and len(batches) > 1:
        raise ContractError("the GAE block loss does not decompose over node batches")
    n = x_prop.shape[0]
    n_train = int(sup.train_mask.sum()) if sup.kind == "classification" else n
    total = None
    for b in batches:
        b = np.asarray(b)
        xr = x_prop[b]
        h = forward(module, xr, use_u)
        ft = ft_loss_for(module, b, h, sup)
        value, grad_h, grad_r = 0.0, np.zeros_like(h), None
        if ft is not None:
            share = (sup.train_mask[b].sum() / n_train) if sup.kind == "classification" else 1.0
            value = share * ft[0]
            grad_h = share * ft[1]
            grad_r = None if ft[2] is None else share * ft[2]
        if eta > 0 and z is not None:
            bv, bg = bt_loss(h, z[b])
            share = b.shape[0] / n
            value += eta * share * bv
            grad_h = grad_h + eta * share * bg
        part = chain_to_params(grad_h, module, xr, use_u, value, grad_r)
        if total is None:
            total = part
            continue
        total.value += part.value
        total.grad_w = total.grad_w + part.grad_w
        if part.grad_u is not None:
            total.grad_u = total.grad_u + part.grad_u
        if part.grad_r is not None:
            total.grad_r = part.grad_r if total.grad_r is None else total.grad_r + part.grad_r
    return total


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class StackTrainer:
    def __init__(self, cfg: StackConfig, data: Dataset):
        cfg.validate(data)
        self.cfg = cfg
        self.data = data
        self.sup = Supervision.from_dataset(cfg.loss_kind, data)
        t0 = time.perf_counter()
        self.prop = build_propagator(data, cfg.prop_kind, cfg.prop_m, cfg.prop_alpha)
        self.trace = TrainTrace()
        self.trace.preprocess_ms += 1e3 * (time.perf_counter() - t0)
        c = data.num_classes if cfg.loss_kind == "classification" else None
        acts = cfg.module_activations()
        self.modules = [
            init_module(cfg.dims[t], cfg.dims[t + 1], acts[t], cfg.prop_kind,
                        seed=_derived_seed(cfg.seed, 1000 + t), num_classes=c, psi=cfg.psi)
            for t in range(cfg.num_modules)
        ]
        for mod in self.modules:
            mod.prop_m, mod.prop_alpha = self.prop.m, self.prop.alpha
        self.inputs = [None] * cfg.num_modules
        self.targets = [None] * cfg.num_modules
        self.E = cfg.iters_per_visit(data.n)
        self._states = {}

    # -- one module visit ---------------------------------------------------

    def _state(self, t: int, param: str) -> OptimState:
        """Optimizer state for one parameter; fresh per visit unless persisted.

        A persisted ``U`` state is dropped whenever ``U`` is reset to the identity.
        """
        key = (t, param)
        if self.cfg.persist_optimizer and key in self._states:
            return self._states[key]
        cfg = self.cfg
        st = OptimState(kind=cfg.optimizer, lr=cfg.lr, weight_decay=cfg.weight_decay, name=f"{param}{t + 1}")
        self._states[key] = st
        return st

    def _reset_u(self, t: int) -> None:
        self.modules[t].reset_u()
        self._states.pop((t, "U"), None)

    def _preprocess(self, t: int, x: np.ndarray) -> np.ndarray:
        t0 = time.perf_counter()
        xp = preprocess(self.modules[t], self.prop, x)
        self.trace.preprocess_ms += 1e3 * (time.perf_counter() - t0)
        return xp

    def _fit(self, epoch, t, phase, x_prop, use_u, eta, z, rnd=0):
        cfg = self.cfg
        mod = self.modules[t]
        if not use_u and not mod.u_is_identity():
            raise AssertionError(f"U_{t + 1} must be the identity during forward training")
        st_w = self._state(t, "W")
        st_u = self._state(t, "U") if use_u else None
        st_r = self._state(t, "R") if mod.r is not None else None
        n = x_prop.shape[0]
        key = (cfg.seed, epoch, t, _PHASE_CODE[phase], rnd)
        done, sweep = 0, 0
        while done < self.E:
            for batch in batch_iterator(n, cfg.batch_size, key, sweep):
                if done >= self.E:
                    break
                done += 1
                t0 = time.perf_counter()
                res = module_objective(mod, x_prop, batch, self.sup, use_u, eta, z)
                if res is None:
                    continue
                if not math.isfinite(res.value):
                    raise NumericError(f"non-finite loss at epoch {epoch}, module {t + 1}, phase {phase}")
                try:
                    mod.w = apply_update(st_w, mod.w, res.grad_w)
                    if st_u is not None:
                        mod.u = apply_update(st_u, mod.u, res.grad_u)
                    if st_r is not None:
                        mod.r = apply_update(st_r, mod.r, res.grad_r)
                except NumericError as exc:
                    raise NumericError(f"{exc} at epoch {epoch}, module {t + 1}, phase {phase}") from None
                ms = 1e3 * (time.perf_counter() - t0)
                self.trace.records.append((epoch, t + 1, phase, done, res.value, ms))
            sweep += 1

    # -- evaluation of the last module's loss --------------------------------

    def final_module_loss(self) -> float:
        """Loss of the last module on a fixed, seeded pass over all nodes."""
        L = self.cfg.num_modules
        mod = self.modules[L - 1]
        xp = mod.io.x_prop
        if self.sup.kind == "classification":
            idx = np.flatnonzero(self.sup.train_mask)
            return module_objective(mod, xp, idx, self.sup, True).value
        vals, weights = [], []
        for b in batch_iterator(xp.shape[0], self.cfg.batch_size, (self.cfg.seed, 0, 0, _PHASE_CODE["EVAL"], 0)):
            res = module_objective(mod, xp, b, self.sup, True)
            if res is not None:
                vals.append(res.value)
                weights.append(b.shape[0])
        return float(np.average(vals, weights=weights))

    # -- Algorithm driver ----------------------------------------------------

    def run(self):
        cfg = self.cfg
        L = cfg.num_modules
        for epoch in range(1, cfg.epochs + 1):
            x = self.data.features
            for t in range(L - 1):
                mod = self.modules[t]
                self._reset_u(t)
                self.inputs[t] = x
                xp = self._preprocess(t, x)
                first = epoch == 1
                self._fit(epoch, t, "FT", xp, use_u=False,
                          eta=0.0 if first else cfg.eta, z=None if first else self.targets[t])
                x = forward(mod, xp, use_u=False)
            last = self.modules[L - 1]
            self._reset_u(L - 1)
            self.inputs[L - 1] = x
            xp = self._preprocess(L - 1, x)
            self._fit(epoch, L - 1, "FT", xp, use_u=True, eta=0.0, z=None)
            if cfg.track_final_loss:
                self.trace.final_loss.append((epoch, self.final_module_loss()))
            for rnd in range(cfg.bt_rounds):
                for t in range(L - 2, -1, -1):
                    z = expected_features(self.modules[t + 1], self.inputs[t + 1])
                    self.targets[t] = z
                    self._fit(epoch, t, "BT", self.modules[t].io.x_prop, use_u=True,
                              eta=cfg.eta, z=z, rnd=rnd)
            if self.trace.final_loss:
                log.info("epoch %d: final-module loss %.6f", epoch, self.trace.final_loss[-1][1])
        return self.modules, self.trace


def train_stack(cfg: StackConfig, data: Dataset):
    """Run the full forward/backward training schedule; returns ``(modules, trace)``."""
    return StackTrainer(cfg, data).run()


def expected_update_count(cfg: StackConfig, n: int) -> int:
    L = cfg.num_modules
    return cfg.epochs * (L + cfg.bt_rounds * (L - 1)) * cfg.iters_per_visit(n)


def embed(modules, data: Dataset, prop: Propagator | None = None) -> np.ndarray:
    """Full-graph forward chain returning the last module's output.

    Hidden modules run with ``U = I`` (the features handed forward during
    training); the last module applies its jointly trained ``U_L``.
    """
    if prop is None:
        first = modules[0]
        prop = build_propagator(data, first.prop_kind, getattr(first, "prop_m", None),
                                getattr(first, "prop_alpha", None))
    x = data.features
    for t, mod in enumerate(modules):
        xp = preprocess(mod, prop, x)
        x = forward(mod, xp, use_u=(t == len(modules) - 1))
    return x


def predict(modules, data: Dataset, prop: Propagator | None = None) -> np.ndarray:
    """Class logits ``H_L R_L`` of a classification stack."""
    head = modules[-1].r
    if head is None:
        raise ContractError("the last module has no classification head")
    return embed(modules, data, prop) @ head


# ---------------------------------------------------------------- checkpoints

STACK_MAGIC = b"SGST"
STACK_VERSION = 1


def save_stack(modules, loss_kind: str) -> bytes:
    """Stack header (L, dims, loss kind, propagation, activations) then one blob per module."""
    L = len(modules)
    dims = [modules[0].in_dim] + [m.out_dim for m in modules]
    first = modules[0]
    parts = [STACK_MAGIC, struct.pack("<II", STACK_VERSION, L)]
    parts.append(struct.pack(f"<{L + 1}Q", *dims))
    parts.append(struct.pack("<BBId", LOSS_KINDS.index(loss_kind), PROP_KINDS.index(first.prop_kind),
                             int(getattr(first, "prop_m", 1) or 1),
                             float(getattr(first, "prop_alpha", 0.0) or 0.0)))
    parts.append(struct.pack("<B", PSI_KINDS.index(first.psi)))
    parts.append(bytes(ACTIVATIONS.index(m.activation) for m in modules))
    parts.extend(m.to_bytes() for m in modules)
    return b"".join(parts)


def load_stack(buf: bytes):
    """Inverse of ``save_stack``; returns ``(modules, loss_kind)``."""
    if buf[:4] != STACK_MAGIC:
        raise ParseError("not a stack checkpoint (bad magic)")
    version, L = struct.unpack_from("<II", buf, 4)
    if version != STACK_VERSION:
        raise ParseError(f"unsupported checkpoint version {version}")
    pos = 12
    dims = list(struct.unpack_from(f"<{L + 1}Q", buf, pos))
    pos += 8 * (L + 1)
    lk, pk, pm, pa = struct.unpack_from("<BBId", buf, pos)
    pos += struct.calcsize("<BBId")
    (psi,) = struct.unpack_from("<B", buf, pos)
    pos += 1
    acts = [ACTIVATIONS[b] for b in buf[pos:pos + L]]
    pos += L
    modules = []
    for t in range(L):
        mod, pos = SeparableModule.from_bytes(buf, pos, activation=acts[t], prop_kind=PROP_KINDS[pk],
                                              psi=PSI_KINDS[psi])
        mod.prop_m, mod.prop_alpha = pm, pa
        if mod.in_dim != dims[t] or mod.out_dim != dims[t + 1]:
            raise ParseError(f"module {t + 1} shape disagrees with the stack header")
        modules.append(mod)
    if pos != len(buf):
        raise ParseError("trailing bytes after the last module")
    return modules, LOSS_KINDS[lk]
