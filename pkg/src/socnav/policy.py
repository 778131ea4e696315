"""The learned navigation stack: four input encoders, attention fusion, the
local-plan head, the local-plan encoder, three-way attention and the velocity
head — plus the GC/TC ablation controllers built from the same encoders.

Shapes are fixed: features are 512-d, the fused planner feature is 2048-d,
the fused controller feature is 1536-d, plans are 5 poses of
(x, y, cos, sin), commands are (v, w).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn_core import (
    Conv1d, Dense, Linear, ReLU, ShapeError, maxpool_rows, maxpool_rows_backward,
    softmax, softmax_backward,
)
from .worldsim import Twist

FEATURE_DIM = 512
PLAN_DIM = 20        # 5 poses x (x, y, cos, sin)
G_DIM = 20           # 10 waypoints x (x, y)
HIST_DIM = 16        # k=8 past samples x (x, y)


@dataclass
class PolicyInput:
    g: np.ndarray        # (20,) robot-frame downsampled plan
    r: np.ndarray        # (M,) ranges normalized by r_max
    o: np.ndarray        # (2,) odometry (v, w)
    h: np.ndarray        # (P, 16) robot-frame pedestrian histories, oldest first


@dataclass
class PolicyOutput:
    twist: Twist         # actuated (clamped) command
    raw: np.ndarray      # (2,) pre-clamp (v, w), used by the loss
    plan: np.ndarray     # (5, 4) predicted local plan
    attention_a: np.ndarray   # (4,) planner coefficients (g, r, h, o)
    attention_b: np.ndarray   # (3,) controller coefficients (l, r, g)


def clamp_twist(v: float, w: float, max_v: float = 0.6, max_w: float = 1.2) -> Twist:
    return Twist(min(max(v, -max_v), max_v), min(max(w, -max_w), max_w))


def plan_headings(plan: np.ndarray) -> np.ndarray:
    """Headings of a (5, 4) plan via atan2(sin-slot, cos-slot); the all-zero
    pose decodes to heading 0."""
    out = np.zeros(len(plan))
    for i, (_, _, c, s) in enumerate(plan):
        if c == 0.0 and s == 0.0:
            out[i] = 0.0
        else:
            out[i] = math.atan2(s, c)
    return out


class MLP:
    """Dense stack; ReLU after every layer unless the last is linear."""

    def __init__(self, sizes, rng, name, final_linear=False):
        self.layers = []
        n = len(sizes) - 1
        for i in range(n):
            self.layers.append(Dense(sizes[i], sizes[i + 1], rng, f"{name}/fc{i + 1}"))
            if not (final_linear and i == n - 1):
                self.layers.append(ReLU())

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, gy):
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy

    def params(self):
        return [p for layer in self.layers for p in layer.params()]


class _Pad1d:
    """Zero padding along the length axis of channels-last (B, L, C) maps."""

    def __init__(self, pad):
        self.pad = pad

    def forward(self, x):
        return np.pad(x, ((0, 0), (self.pad, self.pad), (0, 0)))

    def backward(self, gy):
        return gy[:, self.pad:-self.pad, :]


class LidarEncoder:
    """Residual 1D conv stack over the normalized scan: 5 conv layers with two
    skip connections, then a dense projection to the 512-d feature.

    Interior K=3 convs are zero-padded so the skip additions line up.
    """

    def __init__(self, n_beams, rng, name):
        self.n_beams = n_beams
        self.conv1 = Conv1d(1, 64, 7, 3, rng, f"{name}/conv1")
        self.conv2 = Conv1d(64, 64, 3, 1, rng, f"{name}/conv2")
        self.conv3 = Conv1d(64, 64, 3, 1, rng, f"{name}/conv3")
        self.conv4 = Conv1d(64, 64, 3, 2, rng, f"{name}/conv4")
        self.conv5 = Conv1d(64, 64, 3, 1, rng, f"{name}/conv5")
        self.pad = _Pad1d(1)
        self.relu1, self.relu2, self.relu3 = ReLU(), ReLU(), ReLU()
        self.relu4, self.relu5, self.relu6 = ReLU(), ReLU(), ReLU()
        l1 = self.conv1.out_len(n_beams)
        l2 = (l1 + 2 - 3) // 2 + 1
        self.flat_dim = 64 * l2
        self.fc = Dense(self.flat_dim, FEATURE_DIM, rng, f"{name}/fc")

    def forward(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.ndim != 2 or r.shape[1] != self.n_beams:
            raise ShapeError(f"lidar encoder expects (B, {self.n_beams}), got {r.shape}")
        B = r.shape[0]
        x = r.reshape(B, self.n_beams, 1)
        y1 = self.relu1.forward(self.conv1.forward(x))
        h = self.relu2.forward(self.conv2.forward(self.pad.forward(y1)))
        h = self.conv3.forward(self.pad.forward(h))
        y2 = self.relu3.forward(h + y1)
        y3 = self.relu4.forward(self.conv4.forward(self.pad.forward(y2)))
        h2 = self.conv5.forward(self.pad.forward(y3))
        y4 = self.relu5.forward(h2 + y3)
        self._B = B
        return self.relu6.forward(self.fc.forward(y4.reshape(B, self.flat_dim)))

    def backward(self, gf):
        g = self.fc.backward(self.relu6.backward(gf)).reshape(self._B, -1, 64)
        g = self.relu5.backward(g)
        gy3 = self.pad.backward(self.conv5.backward(g)) + g           # skip 2
        g = self.relu4.backward(gy3)
        gy2 = self.pad.backward(self.conv4.backward(g))
        g = self.relu3.backward(gy2)
        gh = self.pad.backward(self.conv3.backward(g))
        gy1 = self.pad.backward(self.conv2.backward(self.relu2.backward(gh))) + g  # skip 1
        gx = self.conv1.backward(self.relu1.backward(gy1))
        return gx.reshape(self._B, self.n_beams)

    def params(self):
        return [p for m in (self.conv1, self.conv2, self.conv3, self.conv4,
                            self.conv5, self.fc) for p in m.params()]


class HumanEncoder:
    """Order-free set encoder for pedestrian histories: a shared per-row MLP
    into 1024-d, column max-pool over the set, then a dense layer to 512.

    `forward` packs all rows of the batch into one matrix (fast, training);
    `forward_single` runs each row through the MLP independently, which makes
    permutation/duplication invariance exact to the bit (evaluation).
    """

    ROW_SIZES = (HIST_DIM, 64, 256, 1024)

    def __init__(self, rng, name):
        self.row_mlp = MLP(list(self.ROW_SIZES), rng, f"{name}/row")
        self.fc = Dense(1024, FEATURE_DIM, rng, f"{name}/fc")
        self.relu = ReLU()

    def forward(self, h_list):
        counts = [len(h) for h in h_list]
        nonempty = [np.asarray(h, dtype=np.float64).reshape(-1, HIST_DIM)
                    for h in h_list if len(h)]
        if nonempty:
            packed = np.concatenate(nonempty, axis=0)
            rows_out = self.row_mlp.forward(packed)
        else:
            rows_out = np.zeros((0, 1024))
        pooled = np.zeros((len(h_list), 1024))
        argmaxes = []
        ofs = 0
        for i, n in enumerate(counts):
            if n:
                pooled[i], arg = maxpool_rows(rows_out[ofs:ofs + n])
                argmaxes.append(arg)
                ofs += n
            else:
                argmaxes.append(None)
        self._counts, self._argmaxes = counts, argmaxes
        return self.relu.forward(self.fc.forward(pooled))

    def backward(self, gf):
        gpool = self.fc.backward(self.relu.backward(gf))
        grows = []
        for i, n in enumerate(self._counts):
            if n:
                grows.append(maxpool_rows_backward(gpool[i], self._argmaxes[i], n))
        if grows:
            self.row_mlp.backward(np.concatenate(grows, axis=0))

    def forward_single(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=np.float64).reshape(-1, HIST_DIM)
        if len(h) == 0:
            pooled = np.zeros((1, 1024))
        else:
            rows = [self.row_mlp.forward(h[i:i + 1]) for i in range(len(h))]
            pooled = np.max(np.concatenate(rows, axis=0), axis=0, keepdims=True)
        return self.relu.forward(self.fc.forward(pooled))

    def params(self):
        return self.row_mlp.params() + self.fc.params()


class AttentionFusion:
    """Concatenation attention: a = softmax(W2 relu(W1 concat(features)));
    output is the concatenation of each feature scaled by its coefficient."""

    def __init__(self, n_modalities, rng, name, hidden=128, dim=FEATURE_DIM):
        self.n = n_modalities
        self.dim = dim
        self.W1 = Linear(n_modalities * dim, hidden, rng, f"{name}/W1")
        self.W2 = Linear(hidden, n_modalities, rng, f"{name}/W2")
        self.relu = ReLU()

    def forward(self, feats):
        if len(feats) != self.n:
            raise ShapeError(f"expected {self.n} features, got {len(feats)}")
        concat = np.concatenate(feats, axis=1)
        u = self.relu.forward(self.W1.forward(concat))
        a = softmax(self.W2.forward(u))
        fc = np.concatenate([a[:, i:i + 1] * feats[i] for i in range(self.n)], axis=1)
        self._feats, self._a = feats, a
        return fc, a

    def backward(self, gfc):
        feats, a, d = self._feats, self._a, self.dim
        gfeats = []
        ga = np.zeros_like(a)
        for i in range(self.n):
            gs = gfc[:, i * d:(i + 1) * d]
            gfeats.append(a[:, i:i + 1] * gs)
            ga[:, i] = (gs * feats[i]).sum(axis=1)
        glogits = softmax_backward(a, ga)
        gconcat = self.W1.backward(self.relu.backward(self.W2.backward(glogits)))
        for i in range(self.n):
            gfeats[i] = gfeats[i] + gconcat[:, i * d:(i + 1) * d]
        return gfeats

    def params(self):
        return self.W1.params() + self.W2.params()


class LocalPlanner:
    """Encoders + 4-way attention + plan head. Forward caches f_r and f_g so
    the velocity controller reuses the same tensors."""

    def __init__(self, n_beams, rng, name="planner"):
        self.g_enc = MLP([G_DIM, 32, FEATURE_DIM], rng, f"{name}/g_enc")
        self.r_enc = LidarEncoder(n_beams, rng, f"{name}/lidar")
        self.o_enc = MLP([2, 32, FEATURE_DIM], rng, f"{name}/o_enc")
        self.h_enc = HumanEncoder(rng, f"{name}/h_enc")
        self.fuse = AttentionFusion(4, rng, f"{name}/fuse")
        self.head = MLP([4 * FEATURE_DIM, 512, 256, 64, PLAN_DIM], rng,
                        f"{name}/head", final_linear=True)

    def forward(self, g, r, o, h_list, single=False):
        f_g = self.g_enc.forward(g)
        f_r = self.r_enc.forward(r)
        f_o = self.o_enc.forward(o)
        if single:
            f_h = self.h_enc.forward_single(h_list[0])
        else:
            f_h = self.h_enc.forward(h_list)
        fc, a = self.fuse.forward([f_g, f_r, f_h, f_o])
        plan = self.head.forward(fc)
        self._fg, self._fr = f_g, f_r
        return plan, a, f_r, f_g

    def backward(self, gplan, extra_gfr=None, extra_gfg=None):
        """Backprop the plan-loss gradient; extra_gfr/gfg let a jointly
        trained controller push gradient into the shared encoders."""
        gfc = self.head.backward(gplan)
        gf_g, gf_r, gf_h, gf_o = self.fuse.backward(gfc)
        if extra_gfr is not None:
            gf_r = gf_r + extra_gfr
        if extra_gfg is not None:
            gf_g = gf_g + extra_gfg
        self.g_enc.backward(gf_g)
        self.r_enc.backward(gf_r)
        self.o_enc.backward(gf_o)
        self.h_enc.backward(gf_h)

    def params(self):
        return (self.g_enc.params() + self.r_enc.params() + self.o_enc.params()
                + self.h_enc.params() + self.fuse.params() + self.head.params())


class VelocityController:
    """Local-plan encoder + 3-way attention + velocity head."""

    def __init__(self, rng, name="controller"):
        self.l_enc = MLP([PLAN_DIM, 32, FEATURE_DIM], rng, f"{name}/l_enc")
        self.fuse = AttentionFusion(3, rng, f"{name}/fuse")
        self.head = MLP([3 * FEATURE_DIM, 512, 128, 32, 2], rng, f"{name}/head",
                        final_linear=True)

    def forward(self, plan, f_r, f_g):
        f_l = self.l_enc.forward(plan)
        fv, b = self.fuse.forward([f_l, f_r, f_g])
        raw = self.head.forward(fv)
        return raw, b

    def backward(self, graw):
        gfv = self.head.backward(graw)
        gf_l, gf_r, gf_g = self.fuse.backward(gfv)
        gplan = self.l_enc.backward(gf_l)
        return gplan, gf_r, gf_g

    def params(self):
        return self.l_enc.params() + self.fuse.params() + self.head.params()


class PolicyNets:
    """Full policy: local planner + velocity controller."""

    def __init__(self, n_beams, rng=None, max_v=0.6, max_w=1.2):
        rng = rng or np.random.default_rng(0)
        self.n_beams = n_beams
        self.max_v, self.max_w = max_v, max_w
        self.planner = LocalPlanner(n_beams, rng)
        self.controller = VelocityController(rng)

    def forward(self, pin: PolicyInput) -> PolicyOutput:
        g = pin.g.reshape(1, G_DIM)
        r = pin.r.reshape(1, -1)
        o = pin.o.reshape(1, 2)
        plan, a, f_r, f_g = self.planner.forward(g, r, o, [pin.h], single=True)
        raw, b = self.controller.forward(plan, f_r, f_g)
        v, w = float(raw[0, 0]), float(raw[0, 1])
        return PolicyOutput(twist=clamp_twist(v, w, self.max_v, self.max_w),
                            raw=raw[0].copy(), plan=plan.reshape(5, 4).copy(),
                            attention_a=a[0].copy(), attention_b=b[0].copy())

    def params(self):
        return self.planner.params() + self.controller.params()


class VelHeadNet:
    """Shared shape of the baselines: lidar features concatenated with one
    encoded conditioning input, then the velocity head on 1024 dims."""

    def __init__(self, n_beams, cond_dim, rng, name):
        self.r_enc = LidarEncoder(n_beams, rng, f"{name}/lidar")
        self.c_enc = MLP([cond_dim, 32, FEATURE_DIM], rng, f"{name}/c_enc")
        self.head = MLP([2 * FEATURE_DIM, 512, 128, 32, 2], rng, f"{name}/head",
                        final_linear=True)

    def forward(self, r, cond):
        f_r = self.r_enc.forward(r)
        f_c = self.c_enc.forward(cond)
        return self.head.forward(np.concatenate([f_r, f_c], axis=1))

    def backward(self, graw):
        g = self.head.backward(graw)
        self.r_enc.backward(g[:, :FEATURE_DIM])
        self.c_enc.backward(g[:, FEATURE_DIM:])

    def params(self):
        return self.r_enc.params() + self.c_enc.params() + self.head.params()


class GCNet(VelHeadNet):
    """Goal Controller: lidar + a 2D subgoal moving along the global plan."""

    def __init__(self, n_beams, rng):
        super().__init__(n_beams, 2, rng, "gc")


class TCNet(VelHeadNet):
    """Trajectory Controller: lidar + the flattened downsampled plan G."""

    def __init__(self, n_beams, rng):
        super().__init__(n_beams, G_DIM, rng, "tc")


def gc_subgoal_from_g(g20: np.ndarray, lead: float = 2.0) -> np.ndarray:
    """Subgoal for the GC baseline: the point `lead` meters along the
    downsampled plan (linear interpolation), or its last point when the
    remaining plan is shorter."""
    pts = g20.reshape(-1, 2)
    acc = 0.0
    for i in range(1, len(pts)):
        seg = math.hypot(*(pts[i] - pts[i - 1]))
        if acc + seg >= lead and seg > 0:
            t = (lead - acc) / seg
            return pts[i - 1] + t * (pts[i] - pts[i - 1])
        acc += seg
    return pts[-1].copy()
