"""Frame extraction and clip concatenation through an external media tool."""

from __future__ import annotations

import json
import shlex
import shutil
import subprocess
from pathlib import Path

from .errors import ExtractionError
from .scenario import frames_dir_for, frames_in

DEFAULT_EXTRACT_TEMPLATE = "{ffmpeg} -nostdin -loglevel error -y -i {input} -q:v 3 {outdir}/%03d.jpg"
DEFAULT_CONCAT_TEMPLATE = "{ffmpeg} -nostdin -loglevel error -y -f concat -safe 0 -i {list} -c copy {output}"

_COUNT_FILE = ".count.json"


def find_ffmpeg() -> str | None:
    exe = shutil.which("ffmpeg")
    if exe:
        return exe
    try:
        import imageio_ffmpeg
    except ImportError:
        return None
    return imageio_ffmpeg.get_ffmpeg_exe()


def _render(template: str, **values) -> list[str]:
    if "{ffmpeg}" in template:
        exe = find_ffmpeg()
        if exe is None:
            raise ExtractionError("no ffmpeg executable found (install ffmpeg or imageio-ffmpeg)")
        values["ffmpeg"] = exe
    return [part.format(**values) for part in shlex.split(template)]


def extract_frames(clip, template: str = DEFAULT_EXTRACT_TEMPLATE, outdir=None) -> list[Path]:
    """Extract a clip's frames into ``outdir`` (default ``<clip>.frames/``) and
    return them in order.

    Idempotent: when the frame directory already holds the recorded number of
    frames the tool is not invoked again.
    """
    clip = Path(clip)
    if not clip.is_file():
        raise ExtractionError(f"clip not found: {clip}")
    outdir = Path(outdir) if outdir is not None else frames_dir_for(clip)
    marker = outdir / _COUNT_FILE
    if marker.is_file():
        recorded = json.loads(marker.read_text()).get("frames")
        existing = frames_in(outdir)
        if existing and len(existing) == recorded:
            return existing
    outdir.mkdir(parents=True, exist_ok=True)
    for stale in frames_in(outdir):
        stale.unlink()
    cmd = _render(template, input=str(clip), outdir=str(outdir))
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True)
    except OSError as exc:
        raise ExtractionError(f"could not run media tool for {clip}", str(exc)) from exc
    if proc.returncode != 0:
        raise ExtractionError(
            f"media tool exited with {proc.returncode} for {clip}", proc.stderr + proc.stdout
        )
    frames = frames_in(outdir)
    marker.write_text(json.dumps({"frames": len(frames)}))
    return frames


def concat_clips(clips: list[Path], output, template: str = DEFAULT_CONCAT_TEMPLATE) -> Path:
    """Join clips in order into ``output``; the list file is kept next to it."""
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    listing = output.with_suffix(".txt")
    listing.write_text("".join(f"file '{Path(c).resolve()}'\n" for c in clips))
    cmd = _render(template, list=str(listing), output=str(output))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise ExtractionError(f"concatenation failed for {output}", proc.stderr + proc.stdout)
    return output
