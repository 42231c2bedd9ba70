"""Clip evaluation and inference.

A clip is a directory of PNG frames. HR ground truth is degraded to LR on
the fly with the antialiased cubic resize, or read from a precomputed
`<root>_lr/<clip>` mirror. Scoring follows the clip protocol (boundary
frames excluded); the bicubic mode replaces the model with plain cubic
upscaling of the reference frame and serves as the no-learning baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .image import Frame, FrameSequence, cubic_resize, load_clip, window_clip, write_frame
from .metrics import EvalProtocol, psnr_y, ssim_y
from .model import Model, forward_frame


@dataclass
class FrameScore:
    index: int
    psnr: float
    ssim: float


@dataclass
class ClipReport:
    clip: str
    scores: list

    @property
    def avg_psnr(self) -> float:
        return sum(s.psnr for s in self.scores) / len(self.scores)

    @property
    def avg_ssim(self) -> float:
        return sum(s.ssim for s in self.scores) / len(self.scores)


def bicubic_upscale(seq: FrameSequence, scale: int = 4) -> Frame:
    return cubic_resize(seq.center, float(scale))


def make_predictor(model: Model | None, scale: int = 4):
    """Window -> SR frame callable: the model, or the bicubic fallback."""
    if model is None:
        return lambda seq: bicubic_upscale(seq, scale), 0
    return lambda seq: forward_frame(model, seq), model.config.n_radius


def degrade_clip(hr_frames, scale: int = 4) -> list:
    return [cubic_resize(f, 1.0 / scale) for f in hr_frames]


def _lr_frames_for(clip_dir: Path, hr_frames, degrade: str, scale: int) -> list:
    if degrade == "on":
        return degrade_clip(hr_frames, scale)
    if degrade == "precomputed":
        mirror = clip_dir.parent.with_name(clip_dir.parent.name + "_lr") / clip_dir.name
        if not mirror.is_dir():
            raise FileNotFoundError(f"no precomputed LR mirror at {mirror}")
        return load_clip(mirror)
    raise ValueError(f"degrade must be 'on' or 'precomputed', got {degrade!r}")


def eval_clip(model: Model | None, clip_dir, proto: EvalProtocol | None = None,
              degrade: str = "on", scale: int = 4) -> ClipReport:
    """Score one clip: window every frame, super-resolve, compare on the
    protocol-included frames."""
    proto = proto or EvalProtocol()
    clip_dir = Path(clip_dir)
    hr_frames = load_clip(clip_dir)
    lr_frames = _lr_frames_for(clip_dir, hr_frames, degrade, scale)
    predict, radius = make_predictor(model, scale)
    windows = window_clip(lr_frames, radius, hr_frames)
    scores = []
    for t in proto.scored_indices(len(hr_frames)):
        pred = predict(windows[t])
        scores.append(FrameScore(t, psnr_y(pred, hr_frames[t], proto), ssim_y(pred, hr_frames[t], proto)))
    if not scores:
        raise ValueError(f"{clip_dir}: clip too short for the scoring protocol")
    return ClipReport(clip_dir.name, scores)


def eval_root(model: Model | None, root, proto: EvalProtocol | None = None,
              degrade: str = "on", scale: int = 4, log=None) -> list:
    """Evaluate every clip under root (or root itself if it holds frames);
    reports come back in clip-name order."""
    root = Path(root)
    clip_dirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    if not clip_dirs:
        clip_dirs = [root]
    reports = []
    for clip_dir in clip_dirs:
        report = eval_clip(model, clip_dir, proto, degrade, scale)
        if log is not None:
            log(f"{report.clip}: {report.avg_psnr:.2f} dB / {report.avg_ssim:.4f}")
        reports.append(report)
    return reports


def summarize(reports) -> str:
    lines = [f"{'Clip':<24}{'PSNR':>8}{'SSIM':>9}{'Frames':>8}"]
    for r in reports:
        lines.append(f"{r.clip:<24}{r.avg_psnr:>8.2f}{r.avg_ssim:>9.4f}{len(r.scores):>8}")
    n = len(reports)
    avg_p = sum(r.avg_psnr for r in reports) / n
    avg_s = sum(r.avg_ssim for r in reports) / n
    lines.append(f"{'Average':<24}{avg_p:>8.2f}{avg_s:>9.4f}")
    return "\n".join(lines)


def write_report_csv(path, reports) -> None:
    with open(path, "w") as fh:
        fh.write("clip,frame,psnr,ssim\n")
        for r in reports:
            for s in r.scores:
                fh.write(f"{r.clip},{s.index},{s.psnr!r},{s.ssim!r}\n")
        for r in reports:
            fh.write(f"{r.clip},average,{r.avg_psnr!r},{r.avg_ssim!r}\n")


def infer(model: Model | None, clip_dir, out_dir, scale: int = 4) -> list:
    """Super-resolve every frame of a clip to PNGs named after the inputs."""
    clip_dir = Path(clip_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(clip_dir.glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no .png frames found in {clip_dir}")
    lr_frames = load_clip(clip_dir)
    predict, radius = make_predictor(model, scale)
    written = []
    for path, window in zip(paths, window_clip(lr_frames, radius)):
        target = out_dir / path.name
        write_frame(target, predict(window))
        written.append(target)
    return written


def mean_psnr_over_sequences(model: Model | None, sequences, scale: int = 4) -> float:
    """Average reference-frame PSNR over ready-made sequences (synthetic
    held-out sets); bicubic baseline when model is None."""
    predict, _ = make_predictor(model, scale)
    total = 0.0
    for seq in sequences:
        total += psnr_y(predict(seq), seq.hr_target)
    return total / len(sequences)
