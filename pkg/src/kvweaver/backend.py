"""Model backends: a functionally exact toy transformer and a cost model.

Both backends expose the same three operations:

  prefill(obs)                    observation -> fresh KvCache
  action_denoise(kv, S)           KvCache -> ActionChunk (read-only on kv)
  batched_language_decode(b, k)   advance m requests by up to k tokens each

The toy backend is a real decoder-only transformer (tiny, seeded, float64)
whose outputs are deterministic, so scheduling equivalences can be checked
exactly: decoding a request inside any batch must produce the same tokens
as decoding it alone, and splitting a decode across frames must reproduce
the single-call result token-for-token and cache-for-cache.

The cost backend skips the math and models latency only; its caches are
bare position counts and its tokens come from a counter. Latency pricing
(integer microseconds) lives on both backends so every simulation produces
finite timing metrics, but only the cost backend's numbers are meant to be
read as a performance model.

Toy architecture, pinned for reproducibility: token embedding plus
sinusoidal positions, L blocks of plain causal attention (no normalization,
no biases) each followed by a one-hidden-layer ReLU feed-forward, residual
connections around both, then a linear unembedding. Weights are splitmix64
draws mapped uniformly onto [-0.1, 0.1], generated in a fixed order
(embedding, then per layer Wq Wk Wv Wo W1 W2, then unembedding, then the
action head). Greedy argmax decoding, ties resolved toward the lowest
token id. Requests in a batch never attend to each other's positions.

First decode input: prefill hidden states are not kept, so the first decode
step feeds the EOS id as a beginning-of-sequence stand-in. The convention
is identical on every code path, which is all the equivalence oracles need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kv_manager import BatchedState, KvCache, KvLayer
from .rng import SplitMix64

__all__ = [
    "Observation",
    "BackendConfig",
    "ActionChunk",
    "CostModelParams",
    "ToyBackend",
    "CostModelBackend",
    "make_backend",
]


@dataclass(frozen=True, slots=True)
class Observation:
    """One frame's input: a token stand-in for image patches + instruction."""

    obs_tokens: tuple[int, ...]
    frame: int

    def __post_init__(self):
        object.__setattr__(self, "obs_tokens", tuple(self.obs_tokens))
        if len(self.obs_tokens) < 1:
            raise ValueError("observation needs at least one token")


@dataclass(frozen=True, slots=True)
class BackendConfig:
    L: int = 2
    d_model: int = 32
    n_heads: int = 2
    vocab: int = 64
    eos_token: int = 0
    action_dim: int = 4
    H: int = 10
    S: int = 10
    seed: int = 7

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("need at least one layer")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.d_model % 2 != 0:
            raise ValueError("d_model must be even for sinusoidal positions")
        if not (2 <= self.vocab):
            raise ValueError("vocab must hold at least two tokens")
        if not (0 <= self.eos_token < self.vocab):
            raise ValueError(
                f"eos_token {self.eos_token} outside vocab of {self.vocab}"
            )
        if self.action_dim < 1 or self.H < 1 or self.S < 1:
            raise ValueError("action_dim, H and S must be positive")


@dataclass(frozen=True, slots=True, eq=False)
class ActionChunk:
    """H consecutive action vectors, emitted jointly once per observation."""

    actions: np.ndarray  # [H, action_dim]

    def __post_init__(self):
        a = np.ascontiguousarray(self.actions, dtype=np.float64)
        a.flags.writeable = False
        object.__setattr__(self, "actions", a)
        if a.ndim != 2:
            raise ValueError(f"action chunk must be 2-d, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("action chunk contains non-finite values")

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ActionChunk):
            return NotImplemented
        return np.array_equal(self.actions, other.actions)


@dataclass(frozen=True, slots=True)
class CostModelParams:
    """Latency knobs, integer microseconds per unit.

    Defaults are calibrated so that for the sequential isolated baseline at
    a short budget (N=5, obs_len=800, S=10) the frame splits into 40%
    prefill, 30% denoise and 30% decode. c_decode_per_request is kept far
    below c_decode_base: batched decode is memory bound, so adding a
    request to a step is nearly free, which is what makes cross-frame
    batching pay.
    """

    c_prefill_per_token: int = 25
    c_denoise_per_step: int = 3000
    c_decode_base: int = 5900
    c_decode_per_request: int = 100
    c_contention: float = 1.6

    def __post_init__(self):
        for name in (
            "c_prefill_per_token",
            "c_denoise_per_step",
            "c_decode_base",
            "c_decode_per_request",
        ):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {v!r}")
        if self.c_contention < 1.0:
            raise ValueError(
                f"c_contention must be >= 1, got {self.c_contention}"
            )

    @classmethod
    def zero(cls) -> "CostModelParams":
        return cls(0, 0, 0, 0, 1.0)


class _PricedBackend:
    """Latency arithmetic shared by both backends."""

    config: BackendConfig
    cost: CostModelParams
    backend_tag: str

    def prefill_latency_us(self, p_len: int) -> int:
        return self.cost.c_prefill_per_token * p_len

    def denoise_latency_us(self, steps: int) -> int:
        return steps * self.cost.c_denoise_per_step

    def decode_latency_us(self, steps: int, m: int) -> int:
        return steps * (self.cost.c_decode_base + self.cost.c_decode_per_request * m)

    def _check_tag(self, kv: KvCache) -> None:
        if kv.backend_tag != self.backend_tag:
            raise ValueError(
                f"cache from backend {kv.backend_tag!r} fed to {self.backend_tag!r}"
            )

    def _check_obs(self, obs: Observation) -> None:
        for t in obs.obs_tokens:
            if not (0 <= t < self.config.vocab):
                raise ValueError(
                    f"observation token {t} outside vocab of {self.config.vocab}"
                )

    def _check_batch(self, batched: BatchedState, k: int) -> None:
        if k < 1:
            raise ValueError(f"decode step count must be >= 1, got {k}")
        for i in range(batched.size):
            self._check_tag(batched.kv_batch[i])
            if batched.flags[i]:
                raise ValueError(
                    f"request {batched.request_ids[i]} is terminated, "
                    f"cannot decode it"
                )


# ---------------------------------------------------------------------------
# toy transformer


def _sinusoidal_positions(positions: np.ndarray, d: int) -> np.ndarray:
    half = d // 2
    inv_freq = 10000.0 ** (-np.arange(half, dtype=np.float64) * 2.0 / d)
    ang = positions[:, None].astype(np.float64) * inv_freq[None, :]
    pe = np.empty((positions.shape[0], d), dtype=np.float64)
    pe[:, 0::2] = np.sin(ang)
    pe[:, 1::2] = np.cos(ang)
    return pe


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    # rows always contain at least one finite entry
    mx = np.max(scores, axis=-1, keepdims=True)
    e = np.exp(scores - mx)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass(frozen=True, slots=True)
class _LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


class ToyBackend(_PricedBackend):
    """Exact tiny transformer; see the module docstring for the contract."""

    def __init__(self, config: BackendConfig | None = None,
                 cost: CostModelParams | None = None):
        self.config = config or BackendConfig()
        self.cost = cost or CostModelParams.zero()
        c = self.config
        self.backend_tag = (
            f"toy/L{c.L}-d{c.d_model}-h{c.n_heads}-v{c.vocab}-s{c.seed}"
        )
        self.kind = "Toy"
        rng = SplitMix64(c.seed)

        def draw(rows: int, cols: int) -> np.ndarray:
            flat = np.empty(rows * cols, dtype=np.float64)
            for i in range(rows * cols):
                flat[i] = -0.1 + 0.2 * rng.uniform()
            flat.flags.writeable = False
            return flat.reshape(rows, cols)

        d, ff = c.d_model, 4 * c.d_model
        self._embed = draw(c.vocab, d)
        self._layers = tuple(
            _LayerWeights(
                wq=draw(d, d), wk=draw(d, d), wv=draw(d, d), wo=draw(d, d),
                w1=draw(d, ff), w2=draw(ff, d),
            )
            for _ in range(c.L)
        )
        self._unembed = draw(d, c.vocab)
        self._action_head = draw(c.H * c.action_dim, d)
        self._scale = 1.0 / math.sqrt(d // c.n_heads)

    # ------------------------------------------------------------------

    def _input_rows(self, token_ids, positions) -> np.ndarray:
        ids = np.asarray(token_ids, dtype=np.int64)
        pos = np.asarray(positions, dtype=np.int64)
        return self._embed[ids] + _sinusoidal_positions(pos, self.config.d_model)

    def _full_forward(self, token_ids) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
        """Causal pass over a whole sequence at once.

        Returns per-layer (keys, values) plus the final hidden states.
        This is the prefill path and also the no-cache reference route,
        numerically distinct from the incremental decode path.
        """
        c = self.config
        t = len(token_ids)
        nh, dh = c.n_heads, c.d_model // c.n_heads
        x = self._input_rows(token_ids, np.arange(t))
        mask = np.triu(np.full((t, t), -np.inf), k=1)  # query i sees j <= i
        per_layer = []
        for lw in self._layers:
            q, kk, vv = x @ lw.wq, x @ lw.wk, x @ lw.wv
            qh = q.reshape(t, nh, dh).transpose(1, 0, 2)
            kh = kk.reshape(t, nh, dh).transpose(1, 0, 2)
            vh = vv.reshape(t, nh, dh).transpose(1, 0, 2)
            scores = (qh @ kh.transpose(0, 2, 1)) * self._scale + mask[None, :, :]
            ctx = _softmax_rows(scores) @ vh
            x = x + ctx.transpose(1, 0, 2).reshape(t, c.d_model) @ lw.wo
            x = x + np.maximum(x @ lw.w1, 0.0) @ lw.w2
            per_layer.append((kk, vv))
        return per_layer, x

    def recompute_logits(self, token_ids) -> np.ndarray:
        """Next-token logits via full recompute (no KV cache). Oracle route."""
        _, hidden = self._full_forward(tuple(token_ids))
        return hidden[-1] @ self._unembed

    # ------------------------------------------------------------------
    # the three operations

    def prefill(self, obs: Observation) -> KvCache:
        self._check_obs(obs)
        per_layer, _ = self._full_forward(obs.obs_tokens)
        layers = tuple(KvLayer(keys=k, values=v) for k, v in per_layer)
        return KvCache(layers=layers, seq_len=len(obs.obs_tokens),
                       backend_tag=self.backend_tag)

    def action_denoise(self, kv: KvCache, S: int) -> ActionChunk:
        """Euler flow from zero toward a context-conditioned target.

        a_{s+1} = a_s + (target - a_s) / (S - s). The last step divides by
        one, so the final chunk equals the target exactly for any S >= 1.
        Reads kv without touching it.
        """
        self._check_tag(kv)
        if S < 1:
            raise ValueError(f"denoise step count must be >= 1, got {S}")
        c = self.config
        context = np.mean(kv.layers[-1].values, axis=0)
        target = (self._action_head @ context).reshape(c.H, c.action_dim)
        a = np.zeros_like(target)
        for s in range(S):
            a = a + (target - a) / (S - s)
        return ActionChunk(actions=a)

    def batched_language_decode(self, batched: BatchedState, k: int) -> BatchedState:
        """Advance every request by up to k greedy tokens in one joint pass.

        Each step runs one vectorized forward over all still-active
        requests (padded to the longest context, masked per request), so
        the batch genuinely shares the computation; per-request isolation
        is enforced by the mask, not by looping requests independently.
        """
        self._check_batch(batched, k)
        c = self.config
        nh, dh = c.n_heads, c.d_model // c.n_heads
        m = batched.size

        tokens = [list(tb) for tb in batched.token_buffers]
        flags = [False] * m
        lens = [kv.seq_len for kv in batched.kv_batch]
        # per request, per layer: list of blocks to concatenate at the end
        grown_k = [[[kv.layers[l].keys] for l in range(c.L)] for kv in batched.kv_batch]
        grown_v = [[[kv.layers[l].values] for l in range(c.L)] for kv in batched.kv_batch]

        for _ in range(k):
            active = [i for i in range(m) if not flags[i]]
            if not active:
                break
            a = len(active)
            inputs = [
                tokens[i][-1] if tokens[i] else c.eos_token for i in active
            ]
            x = self._input_rows(inputs, [lens[i] for i in active])
            step_k = [None] * c.L
            step_v = [None] * c.L
            t_max = max(lens[i] for i in active) + 1
            for l, lw in enumerate(self._layers):
                q, kk, vv = x @ lw.wq, x @ lw.wk, x @ lw.wv
                step_k[l], step_v[l] = kk, vv
                keys = np.zeros((a, nh, t_max, dh))
                vals = np.zeros((a, nh, t_max, dh))
                valid = np.zeros((a, t_max), dtype=bool)
                for j, i in enumerate(active):
                    t_i = lens[i]
                    ck = np.vstack(grown_k[i][l]) if len(grown_k[i][l]) > 1 else grown_k[i][l][0]
                    cv = np.vstack(grown_v[i][l]) if len(grown_v[i][l]) > 1 else grown_v[i][l][0]
                    keys[j, :, :t_i] = ck.reshape(t_i, nh, dh).transpose(1, 0, 2)
                    vals[j, :, :t_i] = cv.reshape(t_i, nh, dh).transpose(1, 0, 2)
                    keys[j, :, t_i] = kk[j].reshape(nh, dh)
                    vals[j, :, t_i] = vv[j].reshape(nh, dh)
                    valid[j, : t_i + 1] = True
                qh = q.reshape(a, nh, dh)
                scores = np.einsum("and,antd->ant", qh, keys) * self._scale
                scores = np.where(valid[:, None, :], scores, -np.inf)
                ctx = np.einsum("ant,antd->and", _softmax_rows(scores), vals)
                x = x + ctx.reshape(a, c.d_model) @ lw.wo
                x = x + np.maximum(x @ lw.w1, 0.0) @ lw.w2
            logits = x @ self._unembed
            picks = np.argmax(logits, axis=1)  # first index wins ties: lowest id
            for j, i in enumerate(active):
                for l in range(c.L):
                    grown_k[i][l].append(step_k[l][j : j + 1])
                    grown_v[i][l].append(step_v[l][j : j + 1])
                tok = int(picks[j])
                tokens[i].append(tok)
                lens[i] += 1
                if tok == c.eos_token or len(tokens[i]) == batched.max_lens[i]:
                    flags[i] = True

        new_caches = []
        for i, kv in enumerate(batched.kv_batch):
            if lens[i] == kv.seq_len:
                new_caches.append(kv)  # nothing advanced; reuse as-is
                continue
            layers = tuple(
                KvLayer(
                    keys=np.vstack(grown_k[i][l]), values=np.vstack(grown_v[i][l])
                )
                for l in range(c.L)
            )
            new_caches.append(
                KvCache(layers=layers, seq_len=lens[i], backend_tag=self.backend_tag)
            )
        return BatchedState(
            kv_batch=tuple(new_caches),
            token_buffers=tuple(tuple(t) for t in tokens),
            flags=tuple(flags),
            request_ids=batched.request_ids,
            max_lens=batched.max_lens,
            created_frames=batched.created_frames,
        )


# ---------------------------------------------------------------------------
# cost model


class CostModelBackend(_PricedBackend):
    """Latency-only backend: caches are position counts, tokens a counter.

    Synthesized tokens deliberately skip the EOS id so termination is
    driven purely by each request's budget; that keeps analytic latency
    formulas exact instead of depending on where a fake EOS lands.
    """

    def __init__(self, config: BackendConfig | None = None,
                 cost: CostModelParams | None = None):
        self.config = config or BackendConfig()
        self.cost = cost or CostModelParams()
        self.backend_tag = f"cost/L{self.config.L}-v{self.config.vocab}"
        self.kind = "CostModel"

    def _synth_token(self, n_already: int) -> int:
        t = n_already % self.config.vocab
        if t == self.config.eos_token:
            t = (t + 1) % self.config.vocab
        return t

    def prefill(self, obs: Observation) -> KvCache:
        self._check_obs(obs)
        p = len(obs.obs_tokens)
        return KvCache(layers=(p,) * self.config.L, seq_len=p,
                       backend_tag=self.backend_tag)

    def action_denoise(self, kv: KvCache, S: int) -> ActionChunk:
        self._check_tag(kv)
        if S < 1:
            raise ValueError(f"denoise step count must be >= 1, got {S}")
        c = self.config
        return ActionChunk(actions=np.zeros((c.H, c.action_dim)))

    def batched_language_decode(self, batched: BatchedState, k: int) -> BatchedState:
        self._check_batch(batched, k)
        new_caches = []
        new_buffers = []
        flags = []
        for i in range(batched.size):
            buf = list(batched.token_buffers[i])
            budget = batched.max_lens[i]
            take = min(k, budget - len(buf))
            for _ in range(take):
                buf.append(self._synth_token(len(buf)))
            done = len(buf) == budget
            seq = batched.kv_batch[i].seq_len + take
            new_caches.append(
                KvCache(layers=(seq,) * self.config.L, seq_len=seq,
                        backend_tag=self.backend_tag)
            )
            new_buffers.append(tuple(buf))
            flags.append(done)
        return BatchedState(
            kv_batch=tuple(new_caches),
            token_buffers=tuple(new_buffers),
            flags=tuple(flags),
            request_ids=batched.request_ids,
            max_lens=batched.max_lens,
            created_frames=batched.created_frames,
        )


def make_backend(kind: str, config: BackendConfig,
                 cost: CostModelParams) -> ToyBackend | CostModelBackend:
    if kind == "Toy":
        return ToyBackend(config, cost)
    if kind == "CostModel":
        return CostModelBackend(config, cost)
    raise ValueError(f"unknown backend kind {kind!r} (use Toy or CostModel)")
