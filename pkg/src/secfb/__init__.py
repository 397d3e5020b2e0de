"""Confidential links for IEC 61499 function-block applications.

Annotate a data connection with ``@secure(C, AES, ...)``, compile the
application into per-device networks with CLSender/CLRecv blocks, and run
or benchmark the result on a deterministic virtual clock.
"""

from secfb.compiler import DeploymentPlan, compile_secure_links, emit_plan
from secfb.core import Application, SecGoal, SecureLink, validate_application
from secfb.parser import ParseError, parse_application, serialize_application

__version__ = "0.1.0"

__all__ = [
    "Application",
    "DeploymentPlan",
    "ParseError",
    "SecGoal",
    "SecureLink",
    "compile_secure_links",
    "emit_plan",
    "parse_application",
    "serialize_application",
    "validate_application",
]
