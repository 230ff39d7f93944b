"""Named-section text sessions for the pipeline commands.

A session file is a single text document: a versioned header line, one
``[workspace]`` section declaring the jet space and the parameters, then any
number of ``[artifact <name>]`` sections closed by ``[end]``.  Every
expression is serialized through the pretty-printer grammar, so a reloaded
session reproduces identical canonical forms and saving it again yields a
byte-identical file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import sympy as sp

from .expr import ExprError, SymbolKind, Workspace, parse, to_string
from .geometry import Metric
from .jet import JetSpace
from .operators import WnlOperator
from .systems import HydroSystem

HEADER = "hamforge-session v1"


class SessionError(ExprError):
    pass


def _signs_token(signs) -> str:
    return "".join("p" if s > 0 else "m" for s in signs) or "all"


def _token_signs(token: str) -> tuple:
    if token == "all":
        return ()
    if not all(c in "pm" for c in token):
        raise SessionError(f"bad sign-case token {token!r}")
    return tuple(1 if c == "p" else -1 for c in token)


@dataclass
class Artifact:
    """One named section; ``lines`` hold everything after the kind line."""

    name: str
    kind: str
    lines: list[str] = field(default_factory=list)

    def items(self):
        """(key-tokens, value-or-None) per line; '=' separates key from
        value."""
        out = []
        for ln in self.lines:
            left, sep, right = ln.partition(" = ")
            toks = left.split()
            out.append((tuple(toks), right if sep else None))
        return out

    def values(self, *head) -> list[tuple[tuple, str]]:
        """Lines whose key starts with the given tokens, as
        (remaining-key-tokens, value)."""
        k = len(head)
        return [(toks[k:], v) for toks, v in self.items()
                if toks[:k] == head and v is not None]

    def single(self, *head) -> str:
        got = self.values(*head)
        if len(got) != 1:
            raise SessionError(
                f"artifact {self.name!r}: expected one {' '.join(head)!r} "
                f"line, found {len(got)}")
        return got[0][1]


class Session:
    """Workspace declarations plus artifacts keyed by name, in file order."""

    def __init__(self, workspace: Workspace, space: JetSpace):
        self.workspace = workspace
        self.space = space
        self.artifacts: dict[str, Artifact] = {}

    @classmethod
    def create(cls, n: int, max_order: int = 8,
               parameters: tuple = ()) -> "Session":
        ws = Workspace()
        for p in parameters:
            ws.declare(str(p), SymbolKind.PARAMETER)
        return cls(ws, JetSpace(ws, n, max_order=max_order))

    @property
    def parameters(self) -> list[sp.Symbol]:
        return [s.sym for s in self.workspace.symbols()
                if s.kind == SymbolKind.PARAMETER]

    # --- plumbing ---------------------------------------------------------

    def put(self, art: Artifact):
        self.artifacts[art.name] = art

    def get(self, name: str, kind: str | None = None) -> Artifact:
        art = self.artifacts.get(name)
        if art is None:
            raise SessionError(f"session has no artifact {name!r}")
        if kind is not None and art.kind != kind:
            raise SessionError(
                f"artifact {name!r} has kind {art.kind!r}, expected {kind!r}")
        return art

    def has(self, name: str) -> bool:
        return name in self.artifacts

    def _expr(self, text: str) -> sp.Expr:
        return parse(text, self.workspace).e

    # --- serialization ----------------------------------------------------

    def dumps(self) -> str:
        out = [HEADER, "", "[workspace]",
               f"fields {self.space.n}",
               f"max-order {self.space.max_order}"]
        for p in sorted(self.parameters, key=lambda s: s.name):
            out.append(f"parameter {p.name}")
        out.append("[end]")
        for art in self.artifacts.values():
            out.append("")
            out.append(f"[artifact {art.name}]")
            out.append(f"kind {art.kind}")
            out.extend(art.lines)
            out.append("[end]")
        return "\n".join(out) + "\n"

    def save(self, path: str):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "Session":
        lines = text.splitlines()
        if not lines or lines[0] != HEADER:
            raise SessionError("missing or unsupported session header")
        body = [ln for ln in lines[1:]]
        idx = 0
        sections = []
        while idx < len(body):
            ln = body[idx]
            idx += 1
            if not ln.strip():
                continue
            if not (ln.startswith("[") and ln.endswith("]")):
                raise SessionError(f"expected a section header, got {ln!r}")
            head = ln[1:-1].split()
            content = []
            while idx < len(body) and body[idx] != "[end]":
                content.append(body[idx])
                idx += 1
            if idx >= len(body):
                raise SessionError(f"unterminated section {ln!r}")
            idx += 1
            sections.append((head, content))
        if not sections or sections[0][0] != ["workspace"]:
            raise SessionError("first section must be [workspace]")
        ws_lines = sections[0][1]
        n = None
        max_order = 8
        params = []
        for ln in ws_lines:
            toks = ln.split()
            if toks[:1] == ["fields"] and len(toks) == 2:
                n = int(toks[1])
            elif toks[:1] == ["max-order"] and len(toks) == 2:
                max_order = int(toks[1])
            elif toks[:1] == ["parameter"] and len(toks) == 2:
                params.append(toks[1])
            else:
                raise SessionError(f"bad workspace line {ln!r}")
        if n is None:
            raise SessionError("workspace section lacks a fields line")
        session = cls.create(n, max_order=max_order, parameters=params)
        for head, content in sections[1:]:
            if len(head) != 2 or head[0] != "artifact":
                raise SessionError(f"bad section header {head!r}")
            if not content or not content[0].startswith("kind "):
                raise SessionError(
                    f"artifact {head[1]!r} lacks a kind line")
            session.put(Artifact(head[1], content[0][5:], content[1:]))
        return session

    @classmethod
    def load(cls, path: str) -> "Session":
        with open(path) as fh:
            return cls.loads(fh.read())

    # --- typed artifacts --------------------------------------------------

    def put_system(self, name: str, system: HydroSystem):
        lines = [f"provenance = {system.provenance}"]
        for i, f in enumerate(system.fluxes, start=1):
            lines.append(f"flux {i} = {to_string(f)}")
        self.put(Artifact(name, "system", lines))

    def get_system(self, name: str) -> HydroSystem:
        art = self.get(name, "system")
        fluxes = [None] * self.space.n
        for toks, v in art.values("flux"):
            i = int(toks[0])
            if not 1 <= i <= self.space.n:
                raise SessionError(f"flux index {i} out of range")
            fluxes[i - 1] = self._expr(v)
        if any(f is None for f in fluxes):
            raise SessionError(f"artifact {name!r} is missing flux lines")
        prov = art.single("provenance")
        return HydroSystem(self.space, fluxes, provenance=prov)

    def _metric_lines(self, m: Metric, prefix: tuple = ()) -> list[str]:
        pre = " ".join(str(t) for t in prefix)
        pre = pre + " " if pre else ""
        lines = [f"{pre}variance = {m.variance}"]
        for i in range(1, m.n + 1):
            for j in range(i, m.n + 1):
                lines.append(f"{pre}entry {i} {j} = {to_string(m[i, j])}")
        return lines

    def _metric_from(self, art: Artifact, prefix: tuple = ()) -> Metric:
        n = self.space.n
        variance = art.single(*prefix, "variance")
        ent = [[sp.Integer(0)] * n for _ in range(n)]
        seen = set()
        for toks, v in art.values(*prefix, "entry"):
            i, j = int(toks[0]), int(toks[1])
            e = self._expr(v)
            ent[i - 1][j - 1] = e
            ent[j - 1][i - 1] = e
            seen.add((i, j))
        if len(seen) != n * (n + 1) // 2:
            raise SessionError(
                f"artifact {art.name!r}: incomplete metric entries")
        return Metric(n, ent, variance)

    def put_metric(self, name: str, m: Metric):
        self.put(Artifact(name, "metric", self._metric_lines(m)))

    def get_metric(self, name: str) -> Metric:
        return self._metric_from(self.get(name, "metric"))

    @staticmethod
    def _params_of(art: Artifact) -> list[sp.Symbol]:
        for toks, v in art.items():
            if toks[:1] == ("params",) and v is None:
                return [sp.Symbol(t) for t in toks[1:]]
        return []

    def put_first_order(self, name: str, result):
        """Store a first-order search result: the symbolic constants plus,
        per sign case, the conformal factor and the covariant metric."""
        lines = [
            ("params " + " ".join(str(p) for p in result.params)).strip(),
            f"alpha = {to_string(result.alpha)}",
            f"beta = {to_string(result.beta)}",
            f"gamma = {to_string(result.gamma)}",
        ]
        for signs in sorted(result.cases, reverse=True):
            tok = _signs_token(signs)
            cert = result.cases[signs]
            lines.append(
                f"case {tok} factor = "
                f"{to_string(result.conformal_factors[signs])}")
            lines.extend(self._metric_lines(cert.g, ("case", tok)))
        self.put(Artifact(name, "first-order-certificate", lines))

    def get_first_order(self, name: str) -> dict:
        """{'params', 'alpha', 'beta', 'gamma', 'cases': signs -> {'factor',
        'g'}} with g covariant."""
        art = self.get(name, "first-order-certificate")
        out = {"params": self._params_of(art),
               "alpha": self._expr(art.single("alpha")),
               "beta": self._expr(art.single("beta")),
               "gamma": self._expr(art.single("gamma")),
               "cases": {}}
        tokens = sorted({toks[0] for toks, _ in art.values("case")})
        for tok in tokens:
            signs = _token_signs(tok)
            out["cases"][signs] = {
                "factor": self._expr(art.single("case", tok, "factor")),
                "g": self._metric_from(art, ("case", tok)),
            }
        return out

    def put_third_order(self, name: str, result):
        """Store a third-order search result: per-case dimensions and the
        interpolated symbolic metric."""
        lines = [("params " + " ".join(str(p)
                                       for p in result.params)).strip()]
        for signs in sorted(result.dimensions, reverse=True):
            lines.append(
                f"case {_signs_token(signs)} dimension "
                f"{result.dimensions[signs]}")
        if result.h is not None:
            lines.extend(self._metric_lines(result.h, ("h",)))
        self.put(Artifact(name, "third-order-metric", lines))

    def get_third_order(self, name: str) -> dict:
        art = self.get(name, "third-order-metric")
        dims = {}
        for toks, _ in art.items():
            if toks[:1] == ("case",) and len(toks) == 4 \
                    and toks[2] == "dimension":
                dims[_token_signs(toks[1])] = int(toks[3])
        h = self._metric_from(art, ("h",)) if art.values("h", "entry") else None
        return {"params": self._params_of(art), "dimensions": dims, "h": h}

    def put_operator(self, name: str, op: WnlOperator):
        """Local part as (i, j, order, coefficient), tails as vectors,
        coupling as a matrix, all in the expression grammar."""
        lines = [f"tag = {op.tag}"]
        n = op.n
        for i in range(n):
            for j in range(n):
                for k in sorted(op.local[i][j]):
                    lines.append(f"local {i + 1} {j + 1} {k} = "
                                 f"{to_string(op.local[i][j][k])}")
        for a, w in enumerate(op.tails, start=1):
            for i in range(n):
                if sp.sympify(w[i]) != 0:
                    lines.append(f"tail {a} {i + 1} = {to_string(w[i])}")
        t = len(op.tails)
        lines.append(f"tail-count = {t}")
        for a in range(t):
            for b in range(a, t):
                lines.append(f"coupling {a + 1} {b + 1} = "
                             f"{to_string(op.coupling[a][b])}")
        self.put(Artifact(name, "operator", lines))

    def get_operator(self, name: str) -> WnlOperator:
        art = self.get(name, "operator")
        n = self.space.n
        tag = art.single("tag")
        local = [[{} for _ in range(n)] for _ in range(n)]
        for toks, v in art.values("local"):
            i, j, k = (int(t) for t in toks)
            local[i - 1][j - 1][k] = self._expr(v)
        t = int(art.single("tail-count"))
        tails = [[sp.Integer(0)] * n for _ in range(t)]
        for toks, v in art.values("tail"):
            a, i = int(toks[0]), int(toks[1])
            tails[a - 1][i - 1] = self._expr(v)
        coupling = [[sp.Integer(0)] * t for _ in range(t)]
        for toks, v in art.values("coupling"):
            a, b = int(toks[0]), int(toks[1])
            e = self._expr(v)
            coupling[a - 1][b - 1] = e
            coupling[b - 1][a - 1] = e
        return WnlOperator(self.space, tag, local, tails, coupling)

    def put_info(self, name: str, pairs: dict):
        lines = [f"{k} = {v}" for k, v in pairs.items()]
        self.put(Artifact(name, "info", lines))

    def get_info(self, name: str) -> dict:
        art = self.get(name, "info")
        return {" ".join(toks): v for toks, v in art.items() if v is not None}
