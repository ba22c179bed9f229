"""Message-passing value network over constraint hypergraphs.

Variables and constraints carry two raw features each (domain size +
bounded flag; unbounded count + dynamic tightness). Embeddings start as
linear maps of the raw features and are refined for K rounds: constraints
aggregate their scope variables' embeddings, variables aggregate their
covering constraints', each through a two-layer MLP (rectified hidden,
linear output). A state's value for picking variable `a` is an MLP over
the concatenation of the summed variable embeddings and the embedding of
`a`. Forward, reverse-mode gradients and Adam are implemented here
directly on numpy arrays; aggregation uses sparse incidence matrices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .network import ConstraintNetwork
from .state import SearchState

P_V = 2  # variable raw features: [domain size, bounded flag]
P_C = 2  # constraint raw features: [unbounded count, tightness]

PARAM_FIELDS = (
    "w_v", "w_c",
    "v_w1", "v_b1", "v_w2", "v_b2",
    "c_w1", "c_b1", "c_w2", "c_b2",
    "q_w1", "q_b1", "q_w2", "q_b2",
)

CHECKPOINT_MAGIC = b"CSPNET 1"


def param_shapes(p: int, hidden: int) -> dict[str, tuple[int, ...]]:
    return {
        "w_v": (p, P_V),
        "w_c": (p, P_C),
        "v_w1": (2 * p + P_C, hidden),
        "v_b1": (hidden,),
        "v_w2": (hidden, p),
        "v_b2": (p,),
        "c_w1": (2 * p + P_V, hidden),
        "c_b1": (hidden,),
        "c_w2": (hidden, p),
        "c_b2": (p,),
        "q_w1": (2 * p, hidden),
        "q_b1": (hidden,),
        "q_w2": (hidden, 1),
        "q_b2": (1,),
    }


@dataclass
class NetParams:
    """All learnable tensors plus the structural dims (p, K, hidden)."""

    p: int
    k_rounds: int
    hidden: int
    w_v: np.ndarray
    w_c: np.ndarray
    v_w1: np.ndarray
    v_b1: np.ndarray
    v_w2: np.ndarray
    v_b2: np.ndarray
    c_w1: np.ndarray
    c_b1: np.ndarray
    c_w2: np.ndarray
    c_b2: np.ndarray
    q_w1: np.ndarray
    q_b1: np.ndarray
    q_w2: np.ndarray
    q_b2: np.ndarray

    @property
    def dtype(self):
        return self.w_v.dtype

    def items(self):
        for name in PARAM_FIELDS:
            yield name, getattr(self, name)

    def copy(self) -> "NetParams":
        kw = {name: arr.copy() for name, arr in self.items()}
        return NetParams(p=self.p, k_rounds=self.k_rounds, hidden=self.hidden, **kw)

    def astype(self, dtype) -> "NetParams":
        kw = {name: arr.astype(dtype) for name, arr in self.items()}
        return NetParams(p=self.p, k_rounds=self.k_rounds, hidden=self.hidden, **kw)


def init_params(
    p: int, k_rounds: int, hidden: int = 128, seed: int = 0, dtype=np.float64
) -> NetParams:
    """Uniform(-s, s) init with s = 1/sqrt(fan_in) per tensor."""
    rng = np.random.default_rng(seed)
    fan_in = {
        "w_v": P_V, "w_c": P_C,
        "v_w1": 2 * p + P_C, "v_b1": 2 * p + P_C,
        "v_w2": hidden, "v_b2": hidden,
        "c_w1": 2 * p + P_V, "c_b1": 2 * p + P_V,
        "c_w2": hidden, "c_b2": hidden,
        "q_w1": 2 * p, "q_b1": 2 * p,
        "q_w2": hidden, "q_b2": hidden,
    }
    kw = {}
    for name, shape in param_shapes(p, hidden).items():
        s = 1.0 / np.sqrt(fan_in[name])
        kw[name] = rng.uniform(-s, s, size=shape).astype(dtype)
    return NetParams(p=p, k_rounds=k_rounds, hidden=hidden, **kw)


def zero_grads(params: NetParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.items()}


# --------------------------------------------------------------------------
# Raw features
# --------------------------------------------------------------------------


class GraphCache:
    """Static incidence structure of one network, shared by all its states."""

    def __init__(self, net: ConstraintNetwork):
        self.net = net
        n, e = net.n, net.e
        self.n = n
        self.e = e
        # constraint-major incidence (each constraint row lists its scope)
        self.cv_indices = np.concatenate(
            [np.asarray(c.scope, dtype=np.int64) for c in net.constraints]
        ) if e else np.zeros(0, dtype=np.int64)
        arities = np.array([c.arity for c in net.constraints], dtype=np.int64)
        self.cv_indptr = np.concatenate([[0], np.cumsum(arities)])
        # variable-major incidence (each variable row lists covering constraints)
        self.vc_indices = np.concatenate(
            [np.asarray(cov, dtype=np.int64) for cov in net.covering]
        ) if self.cv_indices.size else np.zeros(0, dtype=np.int64)
        degrees = np.array([len(cov) for cov in net.covering], dtype=np.int64)
        self.vc_indptr = np.concatenate([[0], np.cumsum(degrees)])
        self._mats: dict = {}
        # arity groups for vectorized live-tuple recounts from snapshots
        groups: dict[int, list[int]] = {}
        for j, c in enumerate(net.constraints):
            if c.allowed:
                groups.setdefault(c.arity, []).append(j)
        self.empty_cons = np.array(
            [j for j, c in enumerate(net.constraints) if not c.allowed], dtype=np.int64
        )
        self.groups = []
        for m, idx in sorted(groups.items()):
            idx = np.asarray(idx, dtype=np.int64)
            scope_mat = np.array([net.constraints[j].scope for j in idx], dtype=np.int64)
            counts = np.array([len(net.constraints[j].allowed) for j in idx])
            bounds = np.concatenate([[0], np.cumsum(counts)[:-1]])
            val_cols = [
                np.concatenate([net.constraints[j].cols[k] for j in idx])
                for k in range(m)
            ]
            row_scope = [
                np.repeat(scope_mat[:, k], counts) for k in range(m)
            ]
            self.groups.append((idx, scope_mat, val_cols, row_scope, bounds))
        # all-constraint scope matrix per arity group for ub/tightness
        if net.d_max <= 63:
            self.mask_weights = np.arange(net.d_max, dtype=np.uint64)
        else:
            self.mask_weights = None

    def mats(self, dtype):
        """(S_cv, S_vc) sparse incidence matrices for the given dtype."""
        key = np.dtype(dtype).name
        if key not in self._mats:
            s_cv = sp.csr_matrix(
                (np.ones(self.cv_indices.size, dtype=dtype), self.cv_indices,
                 self.cv_indptr),
                shape=(self.e, self.n),
            )
            s_vc = sp.csr_matrix(
                (np.ones(self.vc_indices.size, dtype=dtype), self.vc_indices,
                 self.vc_indptr),
                shape=(self.n, self.e),
            )
            self._mats[key] = (s_cv, s_vc)
        return self._mats[key]

    def member_from_masks(self, masks) -> np.ndarray:
        if self.mask_weights is not None:
            arr = np.asarray(masks, dtype=np.uint64)
            return ((arr[:, None] >> self.mask_weights[None, :]) & np.uint64(1)).astype(bool)
        mem = np.zeros((self.n, self.net.d_max), dtype=bool)
        for i, m in enumerate(masks):
            for v in range(self.net.d_max):
                if (m >> v) & 1:
                    mem[i, v] = True
        return mem

    def features_from_counts(self, sizes: np.ndarray, live: np.ndarray):
        """(xv, xc) float64 features given domain sizes and live-tuple counts."""
        xv = np.empty((self.n, P_V), dtype=np.float64)
        xv[:, 0] = sizes
        xv[:, 1] = sizes == 1
        xc = np.empty((self.e, P_C), dtype=np.float64)
        for idx, scope_mat, _, _, _ in self.groups:
            ds = sizes[scope_mat]
            xc[idx, 0] = (ds > 1).sum(axis=1)
            d_prod = np.prod(ds.astype(np.float64), axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                tight = np.where(d_prod > 0, 1.0 - live[idx] / d_prod, 1.0)
            xc[idx, 1] = tight
        if self.empty_cons.size:
            for j in self.empty_cons:
                scope = np.asarray(self.net.constraints[j].scope)
                xc[j, 0] = (sizes[scope] > 1).sum()
                xc[j, 1] = 1.0
        return xv, xc

    def live_from_member(self, mem: np.ndarray) -> np.ndarray:
        live = np.zeros(self.e, dtype=np.int64)
        for idx, _, val_cols, row_scope, bounds in self.groups:
            alive = mem[row_scope[0], val_cols[0]]
            for k in range(1, len(val_cols)):
                alive = alive & mem[row_scope[k], val_cols[k]]
            live[idx] = np.add.reduceat(alive.astype(np.int64), bounds)
        return live


def graph_cache(net: ConstraintNetwork) -> GraphCache:
    cache = net.caches.get("graph")
    if cache is None:
        cache = GraphCache(net)
        net.caches["graph"] = cache
    return cache


def state_features(state: SearchState):
    """Raw (xv, xc) of a live search state, using its maintained live counts."""
    return graph_cache(state.net).features_from_counts(state.sizes, state.live)


def snapshot_features(net: ConstraintNetwork, masks):
    """Raw (xv, xc) reconstructed from a domain bit-mask snapshot."""
    cache = graph_cache(net)
    mem = cache.member_from_masks(masks)
    sizes = mem.sum(axis=1).astype(np.int64)
    live = cache.live_from_member(mem)
    return cache.features_from_counts(sizes, live)


# --------------------------------------------------------------------------
# Graph batches
# --------------------------------------------------------------------------


class GraphBatch:
    """One or more state graphs packed into a disjoint union."""

    def __init__(self, caches, xvs, xcs, dtype=np.float64):
        self.n_graphs = len(caches)
        ns = np.array([c.n for c in caches], dtype=np.int64)
        es = np.array([c.e for c in caches], dtype=np.int64)
        self.var_offsets = np.concatenate([[0], np.cumsum(ns)])
        self.con_offsets = np.concatenate([[0], np.cumsum(es)])
        nv, nc = int(self.var_offsets[-1]), int(self.con_offsets[-1])
        self.xv = np.concatenate(xvs).astype(dtype, copy=False)
        self.xc = np.concatenate(xcs).astype(dtype, copy=False)
        cv_indices = np.concatenate(
            [c.cv_indices + off for c, off in zip(caches, self.var_offsets)]
        )
        cv_indptr = np.concatenate(
            [[0]] + [
                c.cv_indptr[1:] + nnz
                for c, nnz in zip(
                    caches,
                    np.concatenate(
                        [[0], np.cumsum([c.cv_indices.size for c in caches])[:-1]]
                    ),
                )
            ]
        )
        vc_indices = np.concatenate(
            [c.vc_indices + off for c, off in zip(caches, self.con_offsets)]
        )
        vc_indptr = np.concatenate(
            [[0]] + [
                c.vc_indptr[1:] + nnz
                for c, nnz in zip(
                    caches,
                    np.concatenate(
                        [[0], np.cumsum([c.vc_indices.size for c in caches])[:-1]]
                    ),
                )
            ]
        )
        ones = np.ones(cv_indices.size, dtype=dtype)
        self.s_cv = sp.csr_matrix((ones, cv_indices, cv_indptr), shape=(nc, nv))
        self.s_vc = sp.csr_matrix((ones.copy(), vc_indices, vc_indptr), shape=(nv, nc))
        self.graph_of_var = np.repeat(np.arange(self.n_graphs), ns)
        self.pool = sp.csr_matrix(
            (np.ones(nv, dtype=dtype), np.arange(nv), self.var_offsets),
            shape=(self.n_graphs, nv),
        )
        self.pool_t = sp.csr_matrix(
            (np.ones(nv, dtype=dtype), self.graph_of_var, np.arange(nv + 1)),
            shape=(nv, self.n_graphs),
        )

    @property
    def n_vars(self):
        return int(self.var_offsets[-1])

    @property
    def n_cons(self):
        return int(self.con_offsets[-1])


def batch_from_state(state: SearchState, dtype=np.float64) -> GraphBatch:
    xv, xc = state_features(state)
    return GraphBatch([graph_cache(state.net)], [xv], [xc], dtype=dtype)


# --------------------------------------------------------------------------
# Forward / backward
# --------------------------------------------------------------------------


def _relu_inplace(x):
    np.maximum(x, 0.0, out=x)
    return x


def embed(params: NetParams, batch: GraphBatch, want_cache: bool = False):
    """K rounds of constraint/variable embedding updates.

    Returns (mu, nu, rounds) where rounds caches per-round intermediates
    when requested (inputs and rectified hiddens of both MLPs).
    """
    xv = batch.xv
    xc = batch.xc
    mu = xv @ params.w_v.T
    nu = xc @ params.w_c.T
    rounds = []
    for _ in range(params.k_rounds):
        a_c = batch.s_cv @ mu
        z_c = np.concatenate([a_c, nu, xc], axis=1)
        h_c = z_c @ params.v_w1
        h_c += params.v_b1
        _relu_inplace(h_c)
        nu = h_c @ params.v_w2
        nu += params.v_b2
        a_v = batch.s_vc @ nu
        z_v = np.concatenate([a_v, mu, xv], axis=1)
        h_v = z_v @ params.c_w1
        h_v += params.c_b1
        _relu_inplace(h_v)
        mu = h_v @ params.c_w2
        mu += params.c_b2
        if want_cache:
            rounds.append((z_c, h_c, z_v, h_v))
    return mu, nu, rounds


@dataclass
class ForwardCache:
    """Intermediates of one q_values forward pass, consumed by backward()."""

    batch: GraphBatch
    rounds: list
    z_q: np.ndarray
    h_q: np.ndarray
    q_graph: np.ndarray
    q_var: np.ndarray


def q_values(
    params: NetParams,
    batch: GraphBatch,
    q_graph,
    q_var,
    want_cache: bool = False,
):
    """Q(s, a) rows: pooled graph embedding concatenated with the action
    variable's embedding, through the Q-head MLP."""
    q_graph = np.asarray(q_graph, dtype=np.int64)
    q_var = np.asarray(q_var, dtype=np.int64)
    mu, _, rounds = embed(params, batch, want_cache=want_cache)
    g = batch.pool @ mu
    z_q = np.concatenate([g[q_graph], mu[q_var]], axis=1)
    h_q = z_q @ params.q_w1
    h_q += params.q_b1
    _relu_inplace(h_q)
    q = (h_q @ params.q_w2)[:, 0] + params.q_b2[0]
    if want_cache:
        return q, ForwardCache(batch, rounds, z_q, h_q, q_graph, q_var)
    return q, None


def backward(params: NetParams, cache: ForwardCache, dq) -> dict[str, np.ndarray]:
    """Gradients of sum(dq * q) w.r.t. every parameter."""
    batch = cache.batch
    p = params.p
    dq = np.asarray(dq, dtype=params.dtype)
    grads = {}

    # Q head
    grads["q_w2"] = (cache.h_q.T @ dq)[:, None]
    grads["q_b2"] = np.array([dq.sum()], dtype=params.dtype)
    d_hq = np.outer(dq, params.q_w2[:, 0])
    d_hq *= cache.h_q > 0
    grads["q_w1"] = cache.z_q.T @ d_hq
    grads["q_b1"] = d_hq.sum(axis=0)
    d_zq = d_hq @ params.q_w1.T

    d_g = np.zeros((batch.n_graphs, p), dtype=params.dtype)
    np.add.at(d_g, cache.q_graph, d_zq[:, :p])
    d_mu = batch.pool_t @ d_g
    np.add.at(d_mu, cache.q_var, d_zq[:, p:])

    for name in ("v_w1", "v_b1", "v_w2", "v_b2", "c_w1", "c_b1", "c_w2", "c_b2"):
        grads[name] = np.zeros(getattr(params, name).shape, dtype=params.dtype)

    d_nu = np.zeros((batch.n_cons, p), dtype=params.dtype)
    for z_c, h_c, z_v, h_v in reversed(cache.rounds):
        # variable update: mu_k = relu(z_v @ c_w1 + c_b1) @ c_w2 + c_b2
        grads["c_w2"] += h_v.T @ d_mu
        grads["c_b2"] += d_mu.sum(axis=0)
        d_hv = d_mu @ params.c_w2.T
        d_hv *= h_v > 0
        grads["c_w1"] += z_v.T @ d_hv
        grads["c_b1"] += d_hv.sum(axis=0)
        d_zv = d_hv @ params.c_w1.T
        d_nu += batch.s_cv @ d_zv[:, :p]  # through the per-variable sums
        d_mu_prev = d_zv[:, p:2 * p]
        # constraint update: nu_k = relu(z_c @ v_w1 + v_b1) @ v_w2 + v_b2
        grads["v_w2"] += h_c.T @ d_nu
        grads["v_b2"] += d_nu.sum(axis=0)
        d_hc = d_nu @ params.v_w2.T
        d_hc *= h_c > 0
        grads["v_w1"] += z_c.T @ d_hc
        grads["v_b1"] += d_hc.sum(axis=0)
        d_zc = d_hc @ params.v_w1.T
        d_mu = d_mu_prev + batch.s_vc @ d_zc[:, :p]  # through per-constraint sums
        d_nu = d_zc[:, p:2 * p].copy()

    grads["w_v"] = d_mu.T @ batch.xv
    grads["w_c"] = d_nu.T @ batch.xc
    return grads


# --------------------------------------------------------------------------
# Optimizer
# --------------------------------------------------------------------------


class Adam:
    """Adam with bias correction; updates the parameter arrays in place."""

    def __init__(self, params: NetParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in params.items()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.items()}

    def step(self, params: NetParams, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if not np.isfinite(g).all():
                raise RuntimeError(f"non-finite gradient in {name}")
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, arr in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            arr -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def save_params(params: NetParams, path) -> None:
    header = {
        "p": params.p,
        "k_rounds": params.k_rounds,
        "hidden": params.hidden,
        "p_v": P_V,
        "p_c": P_C,
        "dtype": np.dtype(params.dtype).name,
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for _, arr in params.items():
            fh.write(np.ascontiguousarray(arr).astype("<f8").tobytes())


def load_params(path) -> NetParams:
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        header = json.loads(fh.readline())
        blob = fh.read()
    for key in ("p", "k_rounds", "hidden", "p_v", "p_c"):
        if key not in header:
            raise ValueError(f"checkpoint header missing {key}")
    if header["p_v"] != P_V or header["p_c"] != P_C:
        raise ValueError("checkpoint raw-feature dims do not match this build")
    shapes = param_shapes(header["p"], header["hidden"])
    expected = sum(int(np.prod(s)) for s in shapes.values()) * 8
    if len(blob) != expected:
        raise ValueError(
            f"checkpoint payload is {len(blob)} bytes, expected {expected}"
        )
    dtype = np.dtype(header.get("dtype", "float64"))
    kw = {}
    off = 0
    for name in PARAM_FIELDS:
        shape = shapes[name]
        size = int(np.prod(shape)) * 8
        arr = np.frombuffer(blob[off:off + size], dtype="<f8").reshape(shape)
        kw[name] = arr.astype(dtype)
        off += size
    return NetParams(
        p=header["p"], k_rounds=header["k_rounds"], hidden=header["hidden"], **kw
    )
