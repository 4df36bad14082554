"""Render per-sentence alignment scores as a blueness heatmap (ANSI or
standalone HTML). Gold sentences are marked with an asterisk."""

from __future__ import annotations

import html as html_mod

import numpy as np

from .align import AlignmentResult
from .data import PairExample
from .errors import DataError


def normalize_scores(scores) -> list[float]:
    """Min-max normalize per document; a constant (or singleton) score list
    maps to full intensity."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise DataError("no sentence scores to render")
    lo, hi = s.min(), s.max()
    if hi == lo:
        return [1.0] * s.size
    return list((s - lo) / (hi - lo))


def _blue(intensity: float) -> tuple[int, int, int]:
    r = int(round(255 * (1.0 - intensity)))
    g = int(round(255 - intensity * 165))
    return r, g, 255


def emit_heatmap(result: AlignmentResult, pair: PairExample, format: str = "ansi") -> str:
    """Render the localization-side sentences with background intensity
    proportional to their min-max-normalized scores."""
    if format not in ("ansi", "html"):
        raise DataError(f"heatmap format must be 'ansi' or 'html', got {format!r}")
    if not result.sentence_scores:
        raise DataError(f"pair {result.pair_id!r} has no sentence scores")
    sentences = pair.gold_doc().raw_sentences
    if len(sentences) != len(result.sentence_scores):
        raise DataError(
            f"pair {result.pair_id!r}: {len(result.sentence_scores)} scores for "
            f"{len(sentences)} sentences")
    intensities = normalize_scores(result.sentence_scores)
    gold = set(result.gold)

    if format == "ansi":
        lines = [f"== {result.pair_id} =="]
        for i, (sent, inten) in enumerate(zip(sentences, intensities)):
            r, g, b = _blue(inten)
            mark = " *" if i in gold else ""
            lines.append(f"\x1b[48;2;{r};{g};{b}m\x1b[30m{sent}{mark}\x1b[0m")
        return "\n".join(lines)

    rows = []
    for i, (sent, inten) in enumerate(zip(sentences, intensities)):
        mark = " *" if i in gold else ""
        rows.append(
            f'<p class="sent" style="background: rgba(30,100,255,{inten:.3f})">'
            f"{html_mod.escape(sent)}{mark}</p>")
    body = "\n".join(rows)
    return (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        f"<title>{html_mod.escape(result.pair_id)}</title>"
        "<style>body{font-family:sans-serif;max-width:48em;margin:2em auto}"
        ".sent{padding:0.3em 0.5em;margin:0.15em 0;border-radius:3px}</style>"
        "</head><body>"
        f"<h3>{html_mod.escape(result.pair_id)}</h3>\n{body}\n</body></html>"
    )
