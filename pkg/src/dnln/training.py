"""Training loop and the synthetic translated-texture dataset.

The dataset renders a smooth random texture at HR, emits 2N+1 frames by
integer translations of the texture (an integer HR shift is a sub-pixel LR
shift, so neighbors genuinely carry complementary samples), and degrades
each frame with the antialiased cubic resize. The loop is deterministic
under a fixed seed: one master seed is fanned out to batch ordering,
augmentation and texture synthesis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import Frame, FrameSequence, augment, resize_array
from .model import Model, forward, named_parameters
from .optim import LOSSES, Adam, NonFiniteGradientError, lr_at
from .tensor import NonFiniteValueError
from .ops import scale as t_scale


def _smooth_texture(rng, size: int) -> np.ndarray:
    """RGB texture mixing three octaves of upsampled uniform noise; the
    finer octaves hold detail that a 4x degradation destroys."""
    coarse = resize_array(rng.random((3, size // 8, size // 8)), 8.0)
    mid = resize_array(rng.random((3, size // 4, size // 4)), 4.0)
    fine = resize_array(rng.random((3, size // 2, size // 2)), 2.0)
    tex = 0.35 * coarse + 0.40 * mid + 0.25 * fine
    return np.clip(tex, 0.0, 1.0)


def _translated_sequence(tex: np.ndarray, shifts, n_radius: int, hr_size: int,
                         margin: int, scale: int) -> FrameSequence:
    """Crop one texture canvas at integer offsets and degrade each crop."""
    hr_frames = [
        tex[:, margin + dy : margin + dy + hr_size, margin + dx : margin + dx + hr_size]
        for dy, dx in shifts
    ]
    lr_frames = [Frame.from_array(resize_array(h, 1.0 / scale)) for h in hr_frames]
    return FrameSequence(
        lr_frames,
        Frame.from_array(hr_frames[n_radius]),
        n_radius,
        {"shifts": list(shifts)},
    )


def synth_dataset(count: int, shift_range: int, texture_seed: int,
                  n_radius: int = 1, hr_size: int = 64, scale: int = 4) -> list:
    """Translated-texture sequences with the true motion kept as metadata."""
    if shift_range < 0 or hr_size % scale != 0:
        raise ValueError("shift_range must be >= 0 and hr_size divisible by scale")
    rng = np.random.default_rng(np.random.SeedSequence(texture_seed))
    margin = shift_range
    canvas = hr_size + 2 * margin
    canvas += (-canvas) % 8  # octave grids need /8 divisibility
    sequences = []
    for _ in range(count):
        tex = _smooth_texture(rng, canvas)
        shifts = []
        for i in range(2 * n_radius + 1):
            if i == n_radius or shift_range == 0:
                shifts.append((0, 0))
            else:
                shifts.append(tuple(int(v) for v in rng.integers(-shift_range, shift_range + 1, 2)))
        sequences.append(_translated_sequence(tex, shifts, n_radius, hr_size, margin, scale))
    return sequences


@dataclass
class TraceRow:
    step: int
    epoch: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    trace: list
    aborted: bool
    final_checkpoint: str | None

    @property
    def losses(self) -> list:
        return [row.loss for row in self.trace]


def _random_augment(seq: FrameSequence, rng) -> FrameSequence:
    ops = []
    if rng.random() < 0.5:
        ops.append("hflip")
    if rng.random() < 0.5:
        ops.append("vflip")
    if rng.random() < 0.5:
        ops.append("rot90")
    return augment(seq, ops) if ops else seq


def write_trace_csv(path, trace) -> None:
    with open(path, "w") as fh:
        fh.write("step,epoch,lr,loss\n")
        for row in trace:
            fh.write(f"{row.step},{row.epoch},{row.lr!r},{row.loss!r}\n")


def train(model: Model, dataset: list, epochs: int | None = None, steps: int | None = None,
          loss: str = "l1", batch_size: int = 8, seed: int = 0, base_lr: float = 1e-4,
          out_dir=None, checkpoint_every: int | None = None, augment_data: bool = True,
          log=None) -> TrainResult:
    """Optimize the model in batches under the halving schedule.

    Exactly one of epochs/steps bounds the run (given steps, enough epochs
    are derived). A short final batch is padded by repeating its last sample
    so every step averages batch_size loss terms. Non-finite loss or
    gradients abort the run; previously written checkpoints are retained.
    """
    if not dataset:
        raise ValueError("train: empty dataset")
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; choose from {sorted(LOSSES)}")
    if epochs is None and steps is None:
        raise ValueError("train: give epochs or steps")
    steps_per_epoch = math.ceil(len(dataset) / batch_size)
    if epochs is None:
        epochs = math.ceil(steps / steps_per_epoch)

    from . import checkpoint as ckpt

    seq_streams = np.random.SeedSequence(seed).spawn(2)
    order_rng = np.random.default_rng(seq_streams[0])
    aug_rng = np.random.default_rng(seq_streams[1])

    params = named_parameters(model)
    opt = Adam(params, lr=base_lr)
    loss_fn = LOSSES[loss]
    trace: list[TraceRow] = []
    step = 0
    final_path = None

    def save(tag: str):
        nonlocal final_path
        if out_dir is None:
            return
        path = Path(out_dir) / tag
        ckpt.save_checkpoint(path, model.config, params)
        final_path = str(path)

    for epoch in range(epochs):
        opt.lr = lr_at(epoch, base_lr)
        order = order_rng.permutation(len(dataset)).tolist()
        for b0 in range(0, len(order), batch_size):
            if steps is not None and step >= steps:
                break
            batch = order[b0 : b0 + batch_size]
            while len(batch) < batch_size:
                batch.append(batch[-1])
            opt.zero_grad()
            total = 0.0
            for idx in batch:
                seq = dataset[idx]
                if augment_data:
                    seq = _random_augment(seq, aug_rng)
                try:
                    pred = forward(model, seq)
                    sample_loss = loss_fn(pred, seq.hr_target.pixels)
                except NonFiniteValueError:
                    # a diverged run overflows mid-forward before the loss
                    # can be observed
                    return TrainResult(trace, True, final_path)
                t_scale(sample_loss, 1.0 / batch_size).backward()
                total += sample_loss.item()
            batch_loss = total / batch_size
            if not math.isfinite(batch_loss):
                return TrainResult(trace, True, final_path)
            try:
                opt.step()
            except NonFiniteGradientError:
                return TrainResult(trace, True, final_path)
            step += 1
            trace.append(TraceRow(step, epoch, opt.lr, batch_loss))
            if log is not None and step % 50 == 0:
                log(f"step {step}  epoch {epoch}  lr {opt.lr:.2e}  {loss} {batch_loss:.6f}")
            if checkpoint_every is not None and step % checkpoint_every == 0:
                save(f"ckpt_step{step:07d}")
        if steps is not None and step >= steps:
            break

    save("ckpt_final")
    if out_dir is not None:
        write_trace_csv(Path(out_dir) / "trace.csv", trace)
    return TrainResult(trace, False, final_path)
