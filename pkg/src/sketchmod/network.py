"""The stroke-editing model: encoder, attribute predictor, offset embedder,
message-passing refiner, mixer, sequence/image generators, and loss terms.

All forward passes operate on one sketch at a time: every stroke is a row, so
attention runs over (K+1) rows with no padding. Batching happens in the
training loop by accumulating per-sketch losses.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, concat, conv3x3
from .geometry import PEN_DOWN, PEN_END, PEN_LIFT, Stroke
from .nn import MLP, Block, LayerNorm, Linear

VARIANTS = ("offset", "attribute_only", "plain")

GMM_SIGMA_MIN = 1e-3
RHO_SQUASH = 0.999999  # keeps 1 - rho^2 strictly positive in the NLL


class MaskAllFalse(ValueError):
    """Attention was asked to run with every key masked out."""


class InvalidTemperature(ValueError):
    pass


@dataclass
class ModelConfig:
    d_model: int = 128
    n_refiner_layers: int = 3
    n_mixer_layers: int = 4
    n_heads: int = 4
    n_points: int = 32
    n_mixtures: int = 5
    image_size: int = 64
    k_max: int = 25
    variant: str = "offset"
    single_stage: bool = False
    encoder_hidden: int = 256
    predictor_hidden: int = 128
    offset_hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.d_model <= 0 or self.n_refiner_layers < 1 or self.n_mixer_layers < 1:
            raise ValueError("d_model and layer counts must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant {self.variant!r} not in {VARIANTS}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"n_heads {self.n_heads} must divide d_model {self.d_model}")
        stages = math.log2(self.image_size / 8)
        if stages < 1 or stages != int(stages):
            raise ValueError(f"image_size {self.image_size} must be 8 * 2**k, k >= 1")
        if self.n_points < 2 or self.n_mixtures < 1 or self.k_max < 1:
            raise ValueError("n_points, n_mixtures, k_max must be sensible")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------- components


class StrokeEncoder(Block):
    """f: flattened (x, y, pen one-hot) rows -> d_model embedding."""

    def __init__(self, cfg, rng):
        h = cfg.encoder_hidden
        self.net = MLP([cfg.n_points * 5, h, h, cfg.d_model], rng)

    def __call__(self, rows):
        return self.net(as_tensor(rows))


class AttributePredictor(Block):
    """F: CAT(e; e_bar) -> 5 attributes; linear/LN/GeLU twice, then linear."""

    def __init__(self, cfg, rng):
        h = cfg.predictor_hidden
        self.fc1 = Linear(2 * cfg.d_model, h, rng)
        self.ln1 = LayerNorm(h)
        self.fc2 = Linear(h, h, rng)
        self.ln2 = LayerNorm(h)
        self.fc3 = Linear(h, 5, rng)

    def __call__(self, pair):
        x = self.ln1(self.fc1(pair)).gelu()
        x = self.ln2(self.fc2(x)).gelu()
        return self.fc3(x)


class OffsetEmbedder(Block):
    """h: attribute difference p_i - p_j -> d_model embedding."""

    def __init__(self, cfg, rng):
        self.net = MLP([5, cfg.offset_hidden, cfg.d_model], rng)

    def __call__(self, delta):
        return self.net(as_tensor(delta))


def _masked_softmax(scores, mask):
    """Softmax over the last axis with invalid keys excluded entirely."""
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise MaskAllFalse("softmax over zero valid strokes")
        scores = scores.masked_fill(~mask, -np.inf)
    return scores.softmax()


class RefinerLayer(Block):
    """One message-passing layer with a four-term decomposed attention score.

    score(i, j) = q_i.kE_j + q_i.kR_ij + u.kE_j + v.kR_ij, scaled by 1/sqrt(d);
    messages are W_v E_j + R_ij. Without offsets (R is None) the layer reduces
    to vanilla single-head self-attention.
    """

    def __init__(self, cfg, rng, use_offsets):
        d = cfg.d_model
        self.w_q = Linear(d, d, rng, bias=False)
        self.w_ke = Linear(d, d, rng, bias=False)
        self.w_v = Linear(d, d, rng, bias=False)
        if use_offsets:
            self.w_kr = Linear(d, d, rng, bias=False)
        self.proj = Linear(d, d, rng)
        self.ln = LayerNorm(d)
        self.ffn = MLP([d, 4 * d, d], rng)
        self._scale = 1.0 / math.sqrt(d)

    def attention(self, E, R=None, u=None, v=None, mask=None):
        n = E.shape[0]
        q = self.w_q(E)
        ke = self.w_ke(E)
        scores = q @ ke.transpose()
        if R is not None:
            kr = self.w_kr(R)
            scores = scores + (q.reshape(n, 1, -1) * kr).sum(axis=-1)
            if v is not None:
                scores = scores + (kr * v).sum(axis=-1)
        if u is not None:
            scores = scores + (ke * u).sum(axis=-1)  # (n,) broadcasts over query rows
        scores = scores * self._scale
        attn = _masked_softmax(scores, None if mask is None else mask[None, :])
        messages = attn @ self.w_v(E)
        if R is not None:
            messages = messages + (attn.reshape(n, n, 1) * R).sum(axis=1)
        return scores, attn, messages

    def __call__(self, E, R=None, u=None, v=None, mask=None):
        _, _, H = self.attention(E, R, u, v, mask)
        phi = self.ln(self.proj(H) + E)
        return self.ffn(phi)


class Refiner(Block):
    """psi: stacked message-passing layers producing the refined source row.

    The global biases u, v are shared across layers (they carry no per-layer
    superscript in the score decomposition, unlike the W matrices).
    """

    def __init__(self, cfg, rng):
        use_offsets = cfg.variant == "offset"
        self.layers = [
            RefinerLayer(cfg, rng, use_offsets) for _ in range(cfg.n_refiner_layers)
        ]
        if use_offsets:
            self.u = Tensor(rng.uniform(-0.1, 0.1, cfg.d_model), requires_grad=True)
            self.v = Tensor(rng.uniform(-0.1, 0.1, cfg.d_model), requires_grad=True)
        if cfg.variant == "attribute_only":
            self.attr_proj = Linear(5, cfg.d_model, rng)
        self._variant = cfg.variant

    def __call__(self, E, R=None, mask=None):
        u = getattr(self, "u", None)
        v = getattr(self, "v", None)
        for layer in self.layers:
            E = layer(E, R, u, v, mask)
        return E


class MixerLayer(Block):
    """Multi-head self-attention block: attend, project+residual+LN, FFN."""

    def __init__(self, cfg, rng):
        d = cfg.d_model
        self.w_q = Linear(d, d, rng, bias=False)
        self.w_k = Linear(d, d, rng, bias=False)
        self.w_v = Linear(d, d, rng, bias=False)
        self.proj = Linear(d, d, rng)
        self.ln = LayerNorm(d)
        self.ffn = MLP([d, 4 * d, d], rng)
        self._heads = cfg.n_heads
        self._scale = 1.0 / math.sqrt(d // cfg.n_heads)

    def __call__(self, x, mask=None):
        n, d = x.shape
        h = self._heads
        dh = d // h
        q = self.w_q(x).reshape(n, h, dh).transpose(1, 0, 2)
        k = self.w_k(x).reshape(n, h, dh).transpose(1, 0, 2)
        v = self.w_v(x).reshape(n, h, dh).transpose(1, 0, 2)
        scores = (q @ k.swapaxes(-1, -2)) * self._scale
        attn = _masked_softmax(scores, None if mask is None else mask[None, None, :])
        out = (attn @ v).transpose(1, 0, 2).reshape(n, d)
        phi = self.ln(self.proj(out) + x)
        return self.ffn(phi)


class Mixer(Block):
    """xi: equips normalized embeddings with projected attributes, then attends."""

    def __init__(self, cfg, rng):
        self.attr_proj = Linear(5, cfg.d_model, rng)
        self.layers = [MixerLayer(cfg, rng) for _ in range(cfg.n_mixer_layers)]

    def __call__(self, e_bar, attrs, mask=None):
        x = e_bar + self.attr_proj(as_tensor(attrs))
        for layer in self.layers:
            x = layer(x, mask)
        return x


class SequenceGenerator(Block):
    """G_seq: one mixed embedding -> n_points steps of GMM + pen parameters."""

    def __init__(self, cfg, rng):
        width = 6 * cfg.n_mixtures + 3
        self.trunk = MLP([cfg.d_model, 256, 256], rng)
        self.head = Linear(256, cfg.n_points * width, rng)
        self._n_points = cfg.n_points
        self._width = width

    def __call__(self, mixed):
        raw = self.head(self.trunk(mixed).gelu())
        return raw.reshape(mixed.shape[0], self._n_points, self._width)


class Conv3x3(Block):
    def __init__(self, c_in, c_out, rng):
        fan_in, fan_out = 9 * c_in, c_out
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self.weight = Tensor(rng.uniform(-limit, limit, (fan_in, fan_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)

    def __call__(self, x):
        return conv3x3(x, self.weight, self.bias)


class ImageGenerator(Block):
    """G_img: pooled embedding -> 8x8 seed -> repeated upsample+conv -> sigmoid."""

    def __init__(self, cfg, rng):
        n_stages = int(math.log2(cfg.image_size / 8))
        channels = [16] * n_stages + [1]
        self.fc = Linear(cfg.d_model, 8 * 8 * channels[0], rng)
        self.convs = [Conv3x3(channels[i], channels[i + 1], rng) for i in range(n_stages)]
        self._c0 = channels[0]
        self._size = cfg.image_size

    def __call__(self, pooled):
        x = self.fc(pooled).gelu().reshape(8, 8, self._c0)
        for i, conv in enumerate(self.convs):
            x = conv(x.upsample2x())
            if i < len(self.convs) - 1:
                x = x.gelu()
        return x.sigmoid().reshape(self._size, self._size)


# --------------------------------------------------------------------- model


class SketchModel(Block):
    def __init__(self, cfg: ModelConfig):
        rng = np.random.default_rng(cfg.seed)
        self.encoder = StrokeEncoder(cfg, rng)
        self.predictor = AttributePredictor(cfg, rng)
        self.offset_embedder = OffsetEmbedder(cfg, rng)
        self.refiner = Refiner(cfg, rng)
        self.mixer = Mixer(cfg, rng)
        self.gen_seq = SequenceGenerator(cfg, rng)
        self.gen_img = ImageGenerator(cfg, rng)
        self.cfg = cfg

    # named_parameters walks attributes; cfg is not a Block/Tensor so it is skipped

    BACKBONE = ("encoder", "predictor", "mixer", "gen_seq", "gen_img")
    REFINEMENT = ("offset_embedder", "refiner")

    def _module_params(self, module_names):
        return [
            (name, t)
            for name, t in self.named_parameters()
            if name.split(".", 1)[0] in module_names
        ]

    def stage1_parameters(self):
        return self._module_params(self.BACKBONE)

    def stage2_parameters(self):
        return self._module_params(self.REFINEMENT)

    # ------------------------------------------------------------- building blocks

    def encode_rows(self, rows):
        return self.encoder(rows)

    def predict_attributes(self, e, e_bar):
        return self.predictor(concat([e, e_bar], axis=-1))

    def offset_tensor(self, attrs):
        n = attrs.shape[0]
        delta = attrs.reshape(n, 1, 5) - attrs.reshape(1, n, 5)
        return self.offset_embedder(delta)

    def refine_source(self, e_bar, R=None, source_index=0, mask=None,
                      e_raw=None, attrs=None):
        """Run the refiner stack and return the refined source row (1, d).

        Inputs depend on the configured variant: `offset` consumes normalized
        embeddings plus the pairwise offset tensor; `attribute_only` consumes
        normalized embeddings with projected attributes added; `plain` consumes
        the un-normalized embeddings alone.
        """
        variant = self.cfg.variant
        if variant == "offset":
            if R is None:
                raise ValueError("offset variant needs the pairwise offset tensor")
            out = self.refiner(e_bar, R, mask)
        elif variant == "attribute_only":
            if attrs is None:
                raise ValueError("attribute_only variant needs attribute rows")
            out = self.refiner(e_bar + self.refiner.attr_proj(as_tensor(attrs)), None, mask)
        else:  # plain
            if e_raw is None:
                raise ValueError("plain variant needs un-normalized embeddings")
            out = self.refiner(e_raw, None, mask)
        return out[source_index : source_index + 1]

    def refined_attributes(self, e_hat, e_bar_source):
        return self.predictor(concat([e_hat, e_bar_source], axis=-1))

    def pooled(self, mixed):
        return mixed.mean(axis=0, keepdims=True)

    # ---------------------------------------------------------------- forwards

    def reconstruct_forward(self, raw_rows, norm_rows):
        """Stage-I path: encode, predict attributes, mix, decode; no refiner."""
        e = self.encode_rows(raw_rows)
        e_bar = self.encode_rows(norm_rows)
        attrs = self.predict_attributes(e, e_bar)
        mixed = self.mixer(e_bar, attrs)
        return {
            "e": e,
            "e_bar": e_bar,
            "attrs": attrs,
            "mixed": mixed,
            "seq_params": self.gen_seq(mixed),
            "image": self.gen_img(self.pooled(mixed)),
        }

    def refine_forward(self, raw_rows, norm_rows, source_index):
        """Refinement path only (no mixing or decoding): encode, predict
        attributes, build offsets, refine the source, re-predict its pose."""
        n = raw_rows.shape[0]
        if not 0 <= source_index < n:
            raise IndexError(f"source_index {source_index} out of range for {n} strokes")
        e = self.encode_rows(raw_rows)
        e_bar = self.encode_rows(norm_rows)
        attrs = self.predict_attributes(e, e_bar)
        R = self.offset_tensor(attrs) if self.cfg.variant == "offset" else None
        e_hat = self.refine_source(e_bar, R, source_index, e_raw=e, attrs=attrs)
        e_bar_source = e_bar[source_index : source_index + 1]
        attrs_refined = self.refined_attributes(e_hat, e_bar_source)
        return {
            "e": e,
            "e_bar": e_bar,
            "attrs": attrs,
            "e_refined": e_hat,
            "attrs_refined": attrs_refined,
        }

    def edit_forward(self, raw_rows, norm_rows, source_index):
        """Full edit path: rows hold the (possibly corrupted) source at
        `source_index` among the target strokes; the refiner re-poses it."""
        out = self.refine_forward(raw_rows, norm_rows, source_index)
        attrs = out["attrs"]
        mix_attrs = concat(
            [attrs[:source_index], out["attrs_refined"], attrs[source_index + 1 :]],
            axis=0,
        )
        mixed = self.mixer(out["e_bar"], mix_attrs)
        out.update(
            mix_attrs=mix_attrs,
            mixed=mixed,
            seq_params=self.gen_seq(mixed),
            image=self.gen_img(self.pooled(mixed)),
        )
        return out


# --------------------------------------------------------------------- losses


def gmm_split(params, n_mixtures):
    """Slice the raw head output into constrained GMM + pen parameters."""
    m = n_mixtures
    log_pi = params[..., 0:m].log_softmax()
    mu_x = params[..., m : 2 * m]
    mu_y = params[..., 2 * m : 3 * m]
    sigma_x = params[..., 3 * m : 4 * m].exp().clamp_min(GMM_SIGMA_MIN)
    sigma_y = params[..., 4 * m : 5 * m].exp().clamp_min(GMM_SIGMA_MIN)
    rho = params[..., 5 * m : 6 * m].tanh() * RHO_SQUASH
    pen_logits = params[..., 6 * m :]
    return log_pi, mu_x, mu_y, sigma_x, sigma_y, rho, pen_logits


def sequence_loss(seq_params, gt_deltas, gt_pen_onehot, n_mixtures, step_mask=None):
    """Mean over valid steps of (bivariate GMM NLL of the delta + pen CE)."""
    log_pi, mu_x, mu_y, sigma_x, sigma_y, rho, pen_logits = gmm_split(
        seq_params, n_mixtures
    )
    n, t = seq_params.shape[0], seq_params.shape[1]
    dx = Tensor(gt_deltas[..., 0].reshape(n, t, 1)) - mu_x
    dy = Tensor(gt_deltas[..., 1].reshape(n, t, 1)) - mu_y
    zx = dx / sigma_x
    zy = dy / sigma_y
    one_minus_rho2 = 1.0 - rho * rho
    z = zx * zx + zy * zy - (rho * zx * zy) * 2.0
    log_norm = (
        -(z / (one_minus_rho2 * 2.0))
        - sigma_x.log()
        - sigma_y.log()
        - one_minus_rho2.log() * 0.5
        - math.log(2.0 * math.pi)
    )
    step_nll = -(log_pi + log_norm).logsumexp().reshape(n, t)
    pen_ce = -(pen_logits.log_softmax() * Tensor(gt_pen_onehot)).sum(axis=-1)
    per_step = step_nll + pen_ce
    if step_mask is None:
        return per_step.mean()
    w = np.asarray(step_mask, dtype=np.float64)
    return (per_step * Tensor(w)).sum() * (1.0 / max(w.sum(), 1.0))


def stage1_loss(out, gt_deltas, gt_pen_onehot, gt_raster, gt_attrs, n_mixtures):
    """L1 = L_seq + 0.2 * sum((I - I_hat)^2) + sum_k |p_k_gt - p_k|^2."""
    seq = sequence_loss(out["seq_params"], gt_deltas, gt_pen_onehot, n_mixtures)
    img_diff = out["image"] - Tensor(gt_raster)
    img = (img_diff * img_diff).sum()
    attr_diff = out["attrs"] - Tensor(gt_attrs)
    attrs = (attr_diff * attr_diff).sum()
    total = seq + img * 0.2 + attrs
    return total, {
        "seq": seq.item(),
        "image": img.item(),
        "attrs": attrs.item(),
        "total": total.item(),
    }


def stage2_loss(e_refined, attrs_refined, e_gt_source, p_gt_source):
    """L2 = |sg(e_gt) - e_hat|^2 + |p_gt - p_prime|^2 (e_gt enters detached)."""
    e_gt = e_gt_source.detach() if isinstance(e_gt_source, Tensor) else Tensor(e_gt_source)
    e_diff = e_gt - e_refined
    emb = (e_diff * e_diff).sum()
    p_diff = Tensor(np.asarray(p_gt_source, dtype=np.float64).reshape(1, 5)) - attrs_refined
    att = (p_diff * p_diff).sum()
    total = emb + att
    return total, {"embedding": emb.item(), "attrs": att.item(), "total": total.item()}


# --------------------------------------------------------------------- decode


def decode_sequences(seq_params_data, starts, n_mixtures, mode="greedy",
                     temperature=1.0, rng=None, final_stroke_ends=True):
    """Turn raw generator output into concrete strokes.

    Greedy takes the mean of the max-weight component and the argmax pen state;
    temperature mode samples the component, the bivariate normal (stds scaled
    by sqrt(T)), and the pen state. Absolute coordinates accumulate from each
    stroke's given start point. Pen rows are sanitized to the down/.../lift
    convention so every decoded stroke is a valid polyline.
    """
    m = n_mixtures
    params = np.asarray(seq_params_data, dtype=np.float64)
    n, t, _ = params.shape
    if mode == "temperature":
        if temperature <= 0:
            raise InvalidTemperature(f"temperature must be positive, got {temperature}")
        if rng is None:
            rng = np.random.default_rng(0)
    elif mode != "greedy":
        raise ValueError(f"unknown decode mode {mode!r}")

    def softmax(x):
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)

    pi = softmax(params[..., 0:m] / (temperature if mode == "temperature" else 1.0))
    mu = np.stack([params[..., m : 2 * m], params[..., 2 * m : 3 * m]], axis=-1)
    sigma = np.stack(
        [
            np.maximum(np.exp(params[..., 3 * m : 4 * m]), GMM_SIGMA_MIN),
            np.maximum(np.exp(params[..., 4 * m : 5 * m]), GMM_SIGMA_MIN),
        ],
        axis=-1,
    )
    rho = np.tanh(params[..., 5 * m : 6 * m]) * RHO_SQUASH
    pen_logits = params[..., 6 * m :]

    strokes = []
    for i in range(n):
        deltas = np.zeros((t, 2))
        for step in range(t):
            if mode == "greedy":
                k = int(pi[i, step].argmax())
                deltas[step] = mu[i, step, k]
            else:
                k = int(rng.choice(m, p=pi[i, step]))
                sx, sy = sigma[i, step, k] * math.sqrt(temperature)
                r = rho[i, step, k]
                cov = np.array([[sx * sx, r * sx * sy], [r * sx * sy, sy * sy]])
                deltas[step] = rng.multivariate_normal(mu[i, step, k], cov)
        points = np.asarray(starts[i], dtype=np.float64) + np.cumsum(deltas, axis=0)
        pen = np.full(t, PEN_DOWN, dtype=np.int64)
        pen[-1] = PEN_LIFT
        strokes.append(Stroke(points, pen))
    if final_stroke_ends and strokes:
        last = strokes[-1]
        pen = last.pen.copy()
        pen[-1] = PEN_END
        strokes[-1] = Stroke(last.points, pen)
    return strokes
