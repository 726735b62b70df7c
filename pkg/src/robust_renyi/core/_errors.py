"""Exception hierarchy shared by every module.

Each error has a stable ``code`` which the CLI reports in its JSON error
object, and also derives from the closest builtin so callers may catch
``ValueError`` and friends directly.
"""

from __future__ import annotations

from typing import ClassVar

import numpy as np


class RenyiError(Exception):
    code: ClassVar[str] = "renyi-error"

    def to_dict(self) -> dict[str, str]:
        return {"error": self.code, "message": str(self)}


class DomainError(RenyiError, ValueError):
    code = "domain-error"


class UnsupportedAlpha(RenyiError, ValueError):
    code = "unsupported-alpha"


class UnsupportedModel(RenyiError, ValueError):
    code = "unsupported-model"


class NonFiniteIntegral(RenyiError, ArithmeticError):
    code = "non-finite-integral"


class NonFiniteCriterion(RenyiError, ArithmeticError):
    code = "non-finite-criterion"


class EmptySample(RenyiError, ValueError):
    code = "empty-sample"


class DegenerateSample(RenyiError, ValueError):
    code = "degenerate-sample"


class NoConvergence(RenyiError, RuntimeError):
    code = "no-convergence"


class NoRoot(RenyiError, RuntimeError):
    code = "no-root"


class SingularS(RenyiError, np.linalg.LinAlgError):
    code = "singular-s"


class SingularMAlpha(RenyiError, np.linalg.LinAlgError):
    code = "singular-m-alpha"


class DegenerateScale(RenyiError, ArithmeticError):
    code = "degenerate-scale"


class RankDeficient(RenyiError, np.linalg.LinAlgError):
    code = "rank-deficient"


class SingularVX(RenyiError, np.linalg.LinAlgError):
    code = "singular-vx"


class TooFewReplicates(RenyiError, ValueError):
    code = "too-few-replicates"


class ParseError(RenyiError, ValueError):
    code = "parse-error"
