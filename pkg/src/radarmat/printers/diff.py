from typing import Any, Literal

from rich.console import Console
from rich.style import Style
from rich.text import Text
from rich.tree import Tree

from ..utils import _NOT_PROVIDED


DIFF_STYLE_MAP: dict[
    Literal["previous", "current", "removed", "added", "modified"],
    Style | str,
] = {
    "previous": "deep_pink2",
    "current": "turquoise2",
    "removed": "red",
    "added": "blue",
    "modified": "yellow bold",
}


TYPE_STYLE_MAP: dict[type | tuple[type, ...], Style] = {
    bool: Style(color="bright_cyan"),
    (int, float): Style(color="bright_magenta"),
    str: Style(color="green"),
    (list, tuple): Style(color="bright_cyan"),
    dict: Style(color="bright_blue"),
}

NONE_STYLE = Style(color="bright_cyan")


def get_value_style(value: Any) -> Style:
    if value is None:
        return NONE_STYLE
    for tp, style in TYPE_STYLE_MAP.items():
        if isinstance(value, tp):
            return style
    return Style.parse("default")


def _leaf(key: str, value: Any, style: Style | str | None = None) -> Text:
    return Text.assemble((key, style or "default"), (f": {value!r}", style or get_value_style(value)))


def create_diff_tree(
    d1: dict[str, Any],
    d2: dict[str, Any],
    parent: Tree,
    *,
    dim_unchanged: bool = False,
    skip_unchanged: bool = False,
) -> Tree:
    """
    Add the differences between `d1` (defaults) and `d2` (effective values)
    to `parent`, recursing into nested dictionaries.
    """
    for key in sorted(set(d1) | set(d2)):
        if key not in d2:
            parent.add(Text(f"{key} (removed)", style=DIFF_STYLE_MAP["removed"]))
            continue
        if key not in d1:
            parent.add(_leaf(f"{key} (added)", d2[key], DIFF_STYLE_MAP["added"]))
            continue

        v1, v2 = d1[key], d2[key]
        if isinstance(v2, dict):
            node = parent.add(Text(key, style="bold"))
            base = v1 if isinstance(v1, dict) else {k: _NOT_PROVIDED for k in v2}
            create_diff_tree(
                base,
                v2,
                node,
                dim_unchanged=dim_unchanged,
                skip_unchanged=skip_unchanged,
            )
        elif v1 == v2:
            if not skip_unchanged:
                parent.add(_leaf(key, v1, "dim" if dim_unchanged else None))
        elif v1 is _NOT_PROVIDED:
            parent.add(
                Text.assemble(
                    (f"{key}: ", DIFF_STYLE_MAP["modified"]),
                    (repr(v2), get_value_style(v2)),
                    (" (assigned)", "yellow"),
                )
            )
        else:
            node = parent.add(Text(key, style=DIFF_STYLE_MAP["modified"]))
            node.add(Text(f"default: {v1!r}", style=DIFF_STYLE_MAP["previous"]))
            node.add(Text(f"current: {v2!r}", style=DIFF_STYLE_MAP["current"]))

    return parent


def print_tree_diff(
    dict1: dict[str, Any],
    dict2: dict[str, Any],
    *,
    root_name: str | None = None,
    console: Console | None = None,
    dim_unchanged: bool = False,
    skip_unchanged: bool = False,
) -> None:
    """Print effective settings `dict2` as a tree, highlighting changes from `dict1`."""
    console = console or Console(stderr=True)
    root = Tree(root_name or "settings")
    create_diff_tree(
        dict1,
        dict2,
        root,
        dim_unchanged=dim_unchanged,
        skip_unchanged=skip_unchanged,
    )
    console.print(root)
