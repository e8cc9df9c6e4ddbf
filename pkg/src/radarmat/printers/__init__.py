from .validation import print_validation_errors
from .diff import print_tree_diff
from .help import print_help, print_commands


__all__ = ["print_validation_errors", "print_tree_diff", "print_help", "print_commands"]
