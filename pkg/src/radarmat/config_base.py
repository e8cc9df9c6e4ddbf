import argparse
import inspect

from abc import ABC
from collections.abc import Mapping
from io import IOBase
from pathlib import Path
from types import UnionType
from typing import (
    Any,
    Sequence,
    Type,
    Literal,
    Union,
    get_origin,
    get_args,
)
from typing_extensions import Self

import pydantic
import pydantic_yaml
from rich.console import Console

from .yaml_utils import YAML, yaml, is_yaml_path
from . import records, utils, printers


DIFF_PRINT_MODE = Literal["none", "tree", "tree_dim", "tree_skip"]


class ConfigBase(pydantic.BaseModel, Mapping, ABC):
    model_config = pydantic.ConfigDict(
        extra="forbid", protected_namespaces=("model_", "radarmat_")
    )

    _mutually_exclusive_sets: list[set[str]] = []
    """
    Sets of option keys of which exactly one must evaluate as True.

    A scenario object, for instance, is described either by a relative
    permittivity or as a perfect reflector, never both and never neither. If the
    count of truthy options in a set differs from one, validation fails with a
    `ValidationError`.
    """

    def flatten(self, sep="."):
        """
        Flattens the model into a single-level dictionary whose keys are the
        dotted paths of the nested fields, e.g. `{'endpoint.timeout_s': 120.0}`.
        """
        return utils.flatten_dict(self.model_dump(), sep=sep)

    def save_as_yaml(
        self,
        file: Path | str | IOBase,
        default_flow_style: bool | None = False,
        custom_yaml_writer: YAML | None = yaml,
        **json_kwargs,
    ):
        """Write a YAML file representation of the model."""
        pydantic_yaml.to_yaml_file(
            file,
            self,
            default_flow_style=default_flow_style,
            custom_yaml_writer=custom_yaml_writer,
            **json_kwargs,
        )

    @classmethod
    def load_from_yaml(cls, path: Path | str) -> Self:
        return pydantic_yaml.parse_yaml_file_as(cls, Path(path))

    def to_record(self) -> dict[str, Any]:
        return self.flatten()

    def save_as_record(self, path: Path | str):
        records.write_record(path, self.to_record())

    @classmethod
    def from_record(cls, fields: dict[str, str]) -> Self:
        return cls.model_validate(utils.unflatten_dict(fields))

    @classmethod
    def load_from_record(cls, path: Path | str) -> Self:
        return cls.from_record(records.read_record(path))

    @classmethod
    def load(cls, path: Path | str) -> Self:
        """Load from YAML or from a `key = value` record, chosen by file suffix."""
        if is_yaml_path(path):
            return cls.load_from_yaml(path)
        return cls.load_from_record(path)

    @classmethod
    def parse_args(
        cls,
        *,
        prog: str | None = None,
        replace_underscore_to_hyphen: bool = True,
        diff_print_mode: DIFF_PRINT_MODE = "none",
        args: Sequence[str] | None = None,
        sep=".",
        console: Console | None = None,
    ) -> Self:
        """
        Parses command line arguments into an instance of the class.

        Nested models are addressed with `sep` (`--endpoint.timeout_s 30`),
        booleans become `--flag/--no-flag` pairs, `Literal` fields become
        choices and list fields take any number of values. `--help` prints the
        option table and exits with status 0; a validation failure prints every
        offending field on stderr and exits with status 1.
        """
        console = console or Console(stderr=True)

        def _parse_params(
            parser: argparse.ArgumentParser,
            cls: Type[ConfigBase],
            parent_key: str = "",
            sep=sep,
        ):
            for name, field_info in cls.model_fields.items():
                if parent_key:
                    name = f"{parent_key}{sep}{name}"

                tp = field_info.annotation
                assert tp is not None
                origin = get_origin(tp)

                if not origin and inspect.isclass(tp) and issubclass(tp, ConfigBase):
                    _parse_params(parser, tp, name, sep)
                    continue

                if replace_underscore_to_hyphen:
                    name = name.replace("_", "-")

                names = [f"--{name}"]
                kwargs = {}
                kwargs["type"] = tp

                if tp is Any:
                    kwargs["type"] = str
                elif tp is bool:
                    kwargs["action"] = argparse.BooleanOptionalAction
                    del kwargs["type"]
                elif origin is Literal:
                    var_type, literals = utils.get_literals(tp, name)
                    kwargs["type"] = var_type
                    kwargs["choices"] = literals
                elif origin in {list, set, tuple}:
                    kwargs["nargs"] = "*"
                    tp_args = get_args(tp)
                    if len(tp_args) == 0 or get_origin(tp_args[0]) is Literal:
                        kwargs["type"] = str
                    else:
                        kwargs["type"] = tp_args[0]
                elif origin in {UnionType, Union}:
                    # Resolved by pydantic.
                    kwargs["type"] = str
                elif origin is dict:
                    kwargs["type"] = YAML(typ="safe").load

                kwargs["default"] = utils._NOT_PROVIDED
                kwargs["help"] = field_info.description or ""

                parser.add_argument(*names, **kwargs)

        parser = utils.ArgumentParser(
            prog=prog, add_help=False, usage=argparse.SUPPRESS
        )
        parser.add_argument("--help", "-h", action="store_true")
        _parse_params(parser, cls)
        parsed_dict = parser.parse_all_args_as_dict(args)

        if parsed_dict["help"]:
            printers.print_help(
                cls,
                replace_underscore_to_hyphen,
                sep,
                Console(),
                usage=prog,
            )
            raise SystemExit(0)
        del parsed_dict["help"]

        provided = {
            k.replace("-", "_"): v
            for k, v in parsed_dict.items()
            if v is not utils._NOT_PROVIDED
        }
        nested_args_dict = utils.unflatten_dict(provided, sep=sep)

        try:
            instance = cls.model_validate(nested_args_dict)
        except pydantic.ValidationError as e:
            printers.print_validation_errors(cls, e, console)
            raise SystemExit(1)

        cls.print_diff_to_default(instance.model_dump(), diff_print_mode, console)

        return instance

    @classmethod
    def print_diff_to_default(
        cls,
        incoming: dict[str, Any],
        diff_print_mode: DIFF_PRINT_MODE,
        console: Console | None = None,
    ):
        if "tree" in diff_print_mode:
            default_dict = utils.get_default_dict(cls, utils._NOT_PROVIDED)
            dim_unchanged, skip_unchanged = (
                diff_print_mode == "tree_dim",
                diff_print_mode == "tree_skip",
            )
            printers.print_tree_diff(
                default_dict,
                incoming,
                root_name=cls.__name__,
                console=console,
                dim_unchanged=dim_unchanged,
                skip_unchanged=skip_unchanged,
            )

    @pydantic.model_validator(mode="after")
    def check_mutually_exclusive_sets(self) -> Self:
        for exclusive_set in self._mutually_exclusive_sets:
            check = sum(bool(self[key]) for key in exclusive_set) == 1
            if not check:
                raise ValueError(
                    f"Exactly one of {sorted(exclusive_set)} must be set."
                )
        return self

    def __getitem__(self, key: str):
        if key not in type(self).model_fields:
            raise KeyError(f"Key '{key}' not found.")
        return self.__getattribute__(key)

    def __len__(self):
        return len(type(self).model_fields)

    def keys(self):
        return type(self).model_fields.keys()
