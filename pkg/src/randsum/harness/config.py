"""Experiment configuration: JSON in, validated dataclass out."""
from __future__ import annotations

import ast
import json
import math
import re
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..distance import dkw_radius
from ..martingales import GeneratorSpec

EXPERIMENTS = ("randomized-rate", "classical-rate", "quantities", "cf-diagnostics",
               "gaussmix-check", "sphere-selftest")
ESTIMATORS = ("ecdf", "inversion")
DEFAULT_T0_RULE = "4*sqrt(log n)"

_FUNCS = {"log": math.log, "sqrt": math.sqrt, "exp": math.exp}
_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
            ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def _normalize_rule(rule: str) -> str:
    """Add the parentheses of juxtaposed calls: "sqrt log n" -> "sqrt(log(n))"."""
    toks = re.findall(r"\d+\.?\d*(?:[eE][-+]?\d+)?|[A-Za-z_]\w*|\*\*|\S", rule)
    out: list[str] = []  # finished atoms/operators, built right to left
    for tok in reversed(toks):
        if tok in _FUNCS and out and out[0] != "(":
            atom = out.pop(0)
            if atom in _FUNCS:
                raise ValueError(f"cannot parse rule {rule!r}")
            out.insert(0, f"{tok}({atom})")
        elif tok == "(":
            depth, k = 1, 0
            while depth and k < len(out):
                depth += {"(": 1, ")": -1}.get(out[k], 0)
                k += 1
            out[:k] = ["(" + " ".join(out[:k])]
        else:
            out.insert(0, tok)
    return " ".join(out)


def compile_rule(rule: str):
    """Turn an arithmetic rule in ``n`` (e.g. "4*sqrt(log n)") into a function of n."""
    try:
        tree = ast.parse(_normalize_rule(rule), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse rule {rule!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ValueError(f"disallowed syntax in rule {rule!r}: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in _CONSTS \
                and node.id != "n":
            raise ValueError(f"unknown name {node.id!r} in rule {rule!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                               and node.func.id in _FUNCS):
            raise ValueError(f"only log/sqrt/exp calls are allowed in {rule!r}")
    code = compile(tree, "<rule>", "eval")

    def f(n: int) -> float:
        return float(eval(code, {"__builtins__": {}}, {**_FUNCS, **_CONSTS, "n": n}))

    return f


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    generator: dict = field(default_factory=lambda: {"kind": "arch", "arch_gamma": 3.0})
    n_list: tuple = (64, 128, 256, 512)
    M: int = 64
    m: int = 1_000_000
    delta: float = 0.05
    T0_rule: str = DEFAULT_T0_RULE
    master_seed: int = 20240601
    threads: int | str = "auto"
    out_dir: str = "results"
    reps: int = 20_000
    t_points: int = 64
    q: float | None = None
    estimator: str = "ecdf"

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not self.n_list or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n_list must be nonempty and strictly increasing")
        if self.n_list[0] < 1:
            raise ValueError("n values must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.M < 1 or self.m < 1 or self.reps < 1:
            raise ValueError("M, m and reps must be positive")
        if not (self.threads == "auto" or (isinstance(self.threads, int) and self.threads >= 1)):
            raise ValueError("threads must be a positive integer or 'auto'")
        if not 0 <= int(self.master_seed) < 1 << 64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        compile_rule(self.T0_rule)
        self.spec(self.n_list[0])  # validates the generator block
        if self.experiment in ("randomized-rate", "classical-rate") and self.estimator == "ecdf":
            r = dkw_radius(self.m, self.delta)
            low = min(self.expected_signal(n) for n in self.n_list)
            if r > low / 10:
                warnings.warn(f"m={self.m} gives DKW radius {r:.2e}, above a tenth of the "
                              f"smallest expected value {low:.2e}", stacklevel=2)

    def spec(self, n: int) -> GeneratorSpec:
        return GeneratorSpec.from_dict(self.generator, n)

    def T0(self, n: int) -> float:
        return compile_rule(self.T0_rule)(n)

    def expected_signal(self, n: int) -> float:
        """Order-of-magnitude prior for the distance at n, with unit constant."""
        if self.experiment == "classical-rate":
            return 1.0 / math.sqrt(n)
        return max(math.log(n), 1.0) ** 2 / n

    def fit_q(self) -> float:
        if self.q is not None:
            return float(self.q)
        return 2.0 if self.spec(self.n_list[0]).kind == "arch" else 0.0

    @property
    def experiment_id(self) -> str:
        return f"{self.experiment}-{self.spec(self.n_list[0]).label}-s{self.master_seed}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_list"] = list(self.n_list)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def replace(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(d)
