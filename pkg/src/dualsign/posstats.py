"""Part-of-speech occurrence tables and the two-proportion Z-test.

Compares POS tag frequencies between two token sources (gloss annotation
and spoken text). The significance test is the pooled two-proportion Z;
the two-sided p-value comes from the standard normal tail via the
complementary error function.

The proportion denominators are the per-source totals over the analyzed
tags; this interpretation is flagged in the report output.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from pathlib import Path

DEFAULT_TAGS = ("NOUN", "VERB", "ADV", "ADJ")
OTHER = "OTHER"
MIN_REPORTABLE_P = 1e-300


def pos_counts(tagged_sentences: list[list[tuple[str, str]]],
               tags: tuple[str, ...] = DEFAULT_TAGS) -> dict[str, int]:
    """Per-tag totals over a pre-tagged corpus; unknown tags count as OTHER."""
    counts = Counter()
    for sentence in tagged_sentences:
        for _, tag in sentence:
            counts[tag if tag in tags else OTHER] += 1
    result = {tag: counts.get(tag, 0) for tag in tags}
    result[OTHER] = counts.get(OTHER, 0)
    return result


def tag_total(counts: dict[str, int], tags: tuple[str, ...] = DEFAULT_TAGS) -> int:
    return sum(counts.get(tag, 0) for tag in tags)


def two_proportion_z(x1: int, n1: int, x2: int, n2: int) -> tuple[float, float]:
    """Pooled two-proportion Z statistic and the two-sided p-value.

    z = (p2 - p1) / sqrt(pooled * (1 - pooled) * (1/n1 + 1/n2)) with
    pooled = (x1 + x2) / (n1 + n2). Swapping the samples negates z exactly.
    """
    for x, n, label in ((x1, n1, "first"), (x2, n2, "second")):
        if n <= 0:
            raise ValueError(f"{label} sample size must be positive, got {n}")
        if not 0 <= x <= n:
            raise ValueError(f"{label} count {x} outside [0, {n}]")
    p1 = x1 / n1
    p2 = x2 / n2
    pooled = (x1 + x2) / (n1 + n2)
    variance = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    if variance == 0.0:
        # Both proportions are 0 or both are 1, hence equal.
        return 0.0, 1.0
    z = (p2 - p1) / math.sqrt(variance)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return z, p


def format_p(p: float) -> str:
    if p < MIN_REPORTABLE_P:
        return "< 1e-300"
    return f"{p:.6g}"


def load_tagged(path) -> dict[str, list[list[tuple[str, str]]]]:
    """Read JSON-lines of {"tokens", "tags", "source"} grouped by source."""
    grouped: dict[str, list[list[tuple[str, str]]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            raw = json.loads(line)
            tokens, tags = raw.get("tokens"), raw.get("tags")
            source = raw.get("source")
            if source not in ("text", "gloss"):
                raise ValueError(f"{path}:{line_no}: source must be 'text' or "
                                 f"'gloss', got {source!r}")
            if not isinstance(tokens, list) or not isinstance(tags, list) \
                    or len(tokens) != len(tags):
                raise ValueError(f"{path}:{line_no}: tokens and tags must be "
                                 "lists of equal length")
            grouped.setdefault(source, []).append(list(zip(tokens, tags)))
    return grouped


def compare_sources(gloss_sentences, text_sentences,
                    tags: tuple[str, ...] = DEFAULT_TAGS,
                    alpha: float = 0.05) -> dict:
    """Occurrence table plus per-tag significance of the gloss/text gap."""
    gloss_counts = pos_counts(gloss_sentences, tags)
    text_counts = pos_counts(text_sentences, tags)
    gloss_total = tag_total(gloss_counts, tags)
    text_total = tag_total(text_counts, tags)
    tests = {}
    for tag in tags:
        z, p = two_proportion_z(gloss_counts[tag], gloss_total,
                                text_counts[tag], text_total)
        tests[tag] = {"z": z, "p": p, "p_display": format_p(p),
                      "significant": bool(p < alpha)}
    return {
        "tags": list(tags),
        "counts": {"gloss": gloss_counts, "text": text_counts},
        "totals": {"gloss": gloss_total, "text": text_total},
        "alpha": alpha,
        "tests": tests,
        "note": ("proportions use per-source totals over the analyzed tags "
                 "as denominators"),
    }


def format_pos_report(result: dict) -> str:
    tags = result["tags"]
    width = max(len(t) for t in tags + ["source"]) + 2
    num = 10
    lines = ["".join(["source".ljust(width)]
                     + [t.rjust(num) for t in tags] + ["total".rjust(num)])]
    for source in ("gloss", "text"):
        counts = result["counts"][source]
        lines.append("".join(
            [source.ljust(width)]
            + [str(counts[t]).rjust(num) for t in tags]
            + [str(result["totals"][source]).rjust(num)]))
    lines.append("")
    lines.append("two-proportion Z (gloss vs text, pooled):")
    for tag in tags:
        t = result["tests"][tag]
        flag = "  significant" if t["significant"] else ""
        lines.append(f"  {tag.ljust(6)} z = {t['z']:+.4f}  "
                     f"p {t['p_display']}{flag}")
    lines.append("")
    lines.append(f"note: {result['note']}")
    return "\n".join(lines) + "\n"
