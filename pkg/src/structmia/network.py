"""Trainable noise predictor: a small convolutional encoder-decoder.

Three stride-2 down stages and three upsampling stages with additive skips.
The timestep (sinusoidal features through a small MLP) and the class label (a
learned embedding, with an extra row for "unconditional") are summed into one
conditioning vector, projected per stage and added channel-wise.

Model file layout (all little-endian)::

    magic    4 bytes  b"SMDN"
    version  uint16   1
    reserved uint16   0
    in_ch    uint32
    base_ch  uint32
    k_class  uint32   (0 = no class conditioning)
    t_max    uint32
    n_param  uint32   number of float32 values that follow
    params   n_param x float32, tensors in ``state_dict`` order, C-contiguous
"""
from __future__ import annotations

import logging
import math
import struct
from pathlib import Path

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .denoiser import UNCONDITIONAL, Condition
from .errors import FormatError, ParameterError, TrainingError
from .schedule import Schedule

log = logging.getLogger(__name__)

MAGIC = b"SMDN"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIIII")
TIME_FEATURES = 32


def timestep_features(t: torch.Tensor, t_max: int) -> torch.Tensor:
    half = TIME_FEATURES // 2
    freqs = torch.exp(-math.log(1000.0) * torch.arange(half, dtype=torch.float32) / half)
    arg = (t.float() / t_max * 1000.0)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(arg), torch.cos(arg)], dim=1)


class EpsNet(nn.Module):
    def __init__(self, in_ch: int = 3, base_ch: int = 32, k_classes: int = 0, t_max: int = 1000):
        super().__init__()
        self.in_ch, self.base_ch, self.k_classes, self.t_max = in_ch, base_ch, k_classes, t_max
        c1, c2, c3 = base_ch, 2 * base_ch, 2 * base_ch
        hidden = 4 * base_ch
        self.time_mlp = nn.Sequential(nn.Linear(TIME_FEATURES, hidden), nn.SiLU(), nn.Linear(hidden, hidden))
        self.class_emb = nn.Embedding(k_classes + 1, hidden)
        self.stem = nn.Conv2d(in_ch, c1, 3, padding=1)
        self.down = nn.ModuleList([
            nn.Conv2d(c1, c1, 3, stride=2, padding=1),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1),
            nn.Conv2d(c2, c3, 3, stride=2, padding=1),
        ])
        self.down_mix = nn.ModuleList([nn.Conv2d(c, c, 3, padding=1) for c in (c1, c2, c3)])
        self.up = nn.ModuleList([
            nn.Conv2d(c3, c2, 3, padding=1),
            nn.Conv2d(c2, c1, 3, padding=1),
            nn.Conv2d(c1, c1, 3, padding=1),
        ])
        self.up_mix = nn.ModuleList([nn.Conv2d(c, c, 3, padding=1) for c in (c2, c1, c1)])
        self.emb_down = nn.ModuleList([nn.Linear(hidden, c) for c in (c1, c2, c3)])
        self.emb_up = nn.ModuleList([nn.Linear(hidden, c) for c in (c2, c1, c1)])
        self.head = nn.Conv2d(c1, in_ch, 3, padding=1)

    def forward(self, x: torch.Tensor, t: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
        emb = self.time_mlp(timestep_features(t, self.t_max)) + self.class_emb(label)
        emb = F.silu(emb)
        h = F.silu(self.stem(x))
        skips = [h]
        for conv, mix, proj in zip(self.down, self.down_mix, self.emb_down):
            h = F.silu(conv(h) + proj(emb)[:, :, None, None])
            h = F.silu(mix(h))
            skips.append(h)
        skips.pop()  # deepest activation feeds the decoder directly
        for conv, mix, proj in zip(self.up, self.up_mix, self.emb_up):
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = F.silu(conv(h) + proj(emb)[:, :, None, None])
            h = F.silu(mix(h) + skips.pop())
        return self.head(h)


class TrainedDenoiser:
    """Wraps an :class:`EpsNet` behind the numpy ``predict`` contract."""

    min_query_t = 0

    def __init__(self, net: EpsNet):
        self.net = net.eval()
        self.k_classes = net.k_classes or None

    def _label(self, cond: Condition) -> int:
        if cond.is_unconditional:
            return self.net.k_classes
        cond.check(self.k_classes)
        return cond.label

    def predict(self, x_t: np.ndarray, t: int, cond: Condition = UNCONDITIONAL) -> np.ndarray:
        x = np.asarray(x_t, dtype=np.float32)
        if x.ndim != 3 or x.shape[2] != self.net.in_ch:
            raise ParameterError(f"expected HxWx{self.net.in_ch} input, got {x.shape}")
        inp = torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1)))[None]
        with torch.no_grad():
            out = self.net(inp, torch.tensor([t]), torch.tensor([self._label(cond)]))
        return out[0].numpy().transpose(1, 2, 0).astype(np.float64)

    def parameters_vector(self) -> np.ndarray:
        return np.concatenate([p.detach().numpy().ravel() for p in self.net.state_dict().values()])


def train_denoiser(images, labels, schedule: Schedule, epochs: int, lr: float = 0.02, seed: int = 0,
                   k_classes: int | None = None, batch_size: int = 16, momentum: float = 0.9,
                   base_ch: int = 32, p_uncond: float = 0.1, t_train_max: int | None = None,
                   cosine: bool = True, callback=None) -> tuple[TrainedDenoiser, list[float]]:
    """Fit the noise-prediction regression with momentum SGD.

    Timesteps cover ``1..t_train_max`` (default: the whole schedule) by
    stratified sampling: each epoch places one draw in each of ``n`` equal
    slices and shuffles them, which keeps the epoch-mean loss comparable
    across epochs.  ``callback(epoch, model)`` runs after every epoch, which lets a
    single run be scored at several checkpoints.  With ``cosine`` the learning
    rate decays from ``lr`` towards zero over ``epochs``.  Returns the model and the
    per-epoch mean training loss.
    """
    if epochs < 1:
        raise ParameterError("epochs must be >= 1")
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or len(images) == 0:
        raise ParameterError("training needs a non-empty stack of HxWxC images")
    labels = np.asarray(labels, dtype=np.int64)
    k = int(k_classes if k_classes is not None else labels.max() + 1)
    gen = torch.Generator().manual_seed(seed)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        net = EpsNet(images.shape[3], base_ch, k, schedule.t_max)
    x_all = torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2)))
    y_all = torch.from_numpy(labels)
    t_hi = schedule.t_max if t_train_max is None else int(t_train_max)
    if not 1 <= t_hi <= schedule.t_max:
        raise ParameterError(f"t_train_max must be in [1, {schedule.t_max}]")
    ab = torch.tensor(schedule.alpha_bar, dtype=torch.float32)
    opt = torch.optim.SGD(net.parameters(), lr=lr, momentum=momentum)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs) if cosine else None
    history = []
    n = len(x_all)
    for epoch in range(1, epochs + 1):
        net.train()
        perm = torch.randperm(n, generator=gen)
        strata = (torch.arange(n) + torch.rand(n, generator=gen)) * (t_hi / n)
        t_epoch = (1 + strata.long()).clamp(max=t_hi)[torch.randperm(n, generator=gen)]
        total, batches = 0.0, 0
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            x0, y = x_all[idx], y_all[idx].clone()
            t = t_epoch[start:start + batch_size]
            eps = torch.randn(x0.shape, generator=gen)
            drop = torch.rand(len(idx), generator=gen) < p_uncond
            y[drop] = k
            a = ab[t][:, None, None, None]
            x_t = a.sqrt() * x0 + (1 - a).sqrt() * eps
            loss = F.mse_loss(net(x_t, t, y), eps)
            if not torch.isfinite(loss):
                raise TrainingError(f"training diverged at epoch {epoch}", epoch)
            opt.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(net.parameters(), 1.0)
            opt.step()
            total += loss.item()
            batches += 1
        if sched is not None:
            sched.step()
        history.append(total / batches)
        log.info("epoch %d loss %.6f", epoch, history[-1])
        if callback is not None:
            net.eval()
            callback(epoch, TrainedDenoiser(net))
    return TrainedDenoiser(net), history


def save_model(model: TrainedDenoiser, path) -> None:
    net = model.net
    blob = np.concatenate(
        [p.detach().numpy().astype("<f4").ravel() for p in net.state_dict().values()]
    )
    header = _HEADER.pack(MAGIC, VERSION, 0, net.in_ch, net.base_ch, net.k_classes, net.t_max, blob.size)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(blob.tobytes())


def load_model(path) -> TrainedDenoiser:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated model file")
    magic, version, _, in_ch, base_ch, k, t_max, n_param = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a denoiser model file")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    blob = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if blob.size != n_param:
        raise FormatError(f"{path}: expected {n_param} parameters, found {blob.size}")
    net = EpsNet(in_ch, base_ch, k, t_max)
    state = net.state_dict()
    if sum(v.numel() for v in state.values()) != n_param:
        raise FormatError(f"{path}: parameter count does not match architecture")
    offset = 0
    for name, tensor in state.items():
        size = tensor.numel()
        state[name] = torch.from_numpy(blob[offset:offset + size].astype(np.float32).reshape(tensor.shape))
        offset += size
    net.load_state_dict(state)
    return TrainedDenoiser(net)
