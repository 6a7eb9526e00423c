"""Hierarchical prompt-tree code generation engine."""

__version__ = "0.1.0"

from .tree import PromptTree, ROOT_ID  # noqa: F401
from .segments import assemble, CodeDocument  # noqa: F401
from .codegen import CodeGenerator  # noqa: F401
from .session import Session  # noqa: F401
