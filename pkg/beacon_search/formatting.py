from typing import List, Sequence, Tuple


def _truncate(text: str, limit: int) -> str:
    if len(text) <= limit:
        return text
    return text[: max(limit - 3, 0)] + "..."


def format_summary_table(
    rows: Sequence[Tuple[str, float, float, int]],
    num_bins: int = 0,
    max_label: int = 24,
) -> str:
    """Final-iteration reachability per algorithm as an aligned text table."""
    if not rows:
        return ""
    labels = [_truncate(str(label), max_label) for label, _, _, _ in rows]
    width = max(len("algorithm"), *(len(label) for label in labels))
    lines: List[str] = [f"{'algorithm':<{width}}  {'mean_reach':>10}  {'std_reach':>10}  {'R':>4}"]
    for label, (_, mean, std, count) in zip(labels, rows):
        lines.append(f"{label:<{width}}  {mean:>10.4f}  {std:>10.4f}  {count:>4d}")
    if num_bins:
        lines.append(f"bins: {num_bins}")
    return "\n".join(lines)
