from typing import Any, Literal, Union, get_origin, get_args
from types import NoneType, UnionType

from pydantic import BaseModel
from pydantic.fields import FieldInfo
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from .. import utils


def _type_name(tp: Any) -> str:
    if tp is NoneType:
        return "None"
    return tp.__name__ if hasattr(tp, "__name__") else str(tp)


def format_type(annotation: Any) -> Text:
    """Render a type annotation as styled text (`float`, `Path | None`, `list[str]`)."""
    text = Text()
    origin = get_origin(annotation)

    if origin in (UnionType, Union):
        for i, arg in enumerate(get_args(annotation)):
            if i > 0:
                text.append(" | ", style="bold")
            text.append(_type_name(arg), style="blue")
        return text

    if origin is Literal:
        text.append(" | ".join(repr(a) for a in get_args(annotation)), style="cyan")
        return text

    if origin is not None:
        text.append(origin.__name__, style="blue")
        args = get_args(annotation)
        if args:
            text.append("[")
            for i, arg in enumerate(args):
                if i > 0:
                    text.append(", ")
                if get_origin(arg) is Literal:
                    text.append_text(format_type(arg))
                else:
                    text.append(_type_name(arg), style="cyan")
            text.append("]")
        return text

    return Text(_type_name(annotation), style="blue")


def _option_name(key: str, field: FieldInfo) -> str:
    if field.annotation is bool:
        return f"--{key} / --no-{key}"
    return f"--{key}"


def create_options_table(fields: dict[str, FieldInfo]) -> Table:
    table = Table(show_header=True, box=None, padding=(0, 1))
    table.add_column("Option", style="magenta", no_wrap=True)
    table.add_column("Default", style="yellow")
    table.add_column("Type")
    table.add_column("Description", style="white")

    for key, field in fields.items():
        if utils.is_base_model(field.annotation):
            continue
        if field.is_required():
            default = Text("required", style="yellow bold")
        else:
            default = Text(repr(field.get_default(call_default_factory=True)))
        table.add_row(
            Text(_option_name(key, field), style="bold magenta" if field.is_required() else "magenta"),
            default,
            format_type(field.annotation),
            field.description or "",
        )
    return table


def print_help(
    model_class: type[BaseModel],
    underscore_to_hyphen: bool = True,
    sep=".",
    console: Console | None = None,
    *,
    usage: str | None = None,
):
    console = console or Console()
    console.print(f"\n[bold]Usage:[/bold] {usage or model_class.__name__} [OPTIONS]")
    doc = (model_class.__doc__ or "").strip()
    if doc:
        console.print(doc)

    fields = utils.get_field_info(
        model_class, sep=sep, underscore_to_hyphen=underscore_to_hyphen
    )
    console.print(
        Panel(create_options_table(fields), title="Options", border_style="blue")
    )


def print_commands(
    prog: str,
    commands: dict[str, type[BaseModel]],
    console: Console | None = None,
):
    console = console or Console()
    console.print(f"\n[bold]Usage:[/bold] {prog} <command> [OPTIONS]\n")
    table = Table(show_header=False, box=None, padding=(0, 2))
    table.add_column(style="bold magenta")
    table.add_column()
    for name, cls in commands.items():
        summary = (cls.__doc__ or "").strip().splitlines()
        table.add_row(name, summary[0] if summary else "")
    console.print(Panel(table, title="Commands", border_style="blue"))
    console.print(f"Run '{prog} <command> --help' for the options of a command.")
