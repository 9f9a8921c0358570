"""Kernel spec files: JSON documents describing a kernel and its certificates.

Layout (every block except space/rows is optional):

    {
      "space": {"type": "finite" | "windowed", "size": n},
      "markov": true,
      "tail_reach": 1,
      "rows": [{"index": [...], "weight": [...], "tail": 0.0}, ...],
      "weight": {"geometric": z} | {"values": [...], "tail_ratio": z},
      "certificates": {
        "doeblin": {"ell": 1, "nu": {...}, "eta": 0.1, "rho": 0.5},
        "drift": {"C": [0], "r1": 1.09, "eta": 1.26},
        "minorization": {"C": [0], "b": 1.0, "nu": {...}, "alpha": [...]}
      },
      "multiplier": {"xi": [...], "t": 0.5}
    }

Row weights of complex kernels are [re, im] pairs.

Files are emitted canonically (sorted keys, two-space indent, trailing
newline) so that parse followed by emit reproduces them byte for byte.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import scipy.sparse as sp

from .errors import NotMarkov, SpecFileError
from .models import (
    AtomicMeasure,
    DensityKernel,
    DoeblinCertificate,
    DriftCertificate,
    Kernel,
    MinorizationCertificate,
    Multiplier,
    StateSpace,
    WeightFn,
)


@dataclass(frozen=True)
class MultiplierSpec:
    """Fourier multiplier χ_t(x, y) = exp(i t ξ(y))."""

    xi: tuple[float, ...]
    t: float

    @property
    def multiplier(self) -> Multiplier:
        return Multiplier.fourier(np.array(self.xi), self.t)

    def to_dict(self) -> dict:
        return {"xi": list(self.xi), "t": self.t}


@dataclass(frozen=True, eq=False)
class KernelSpec:
    kernel: Kernel
    weight: Optional[WeightFn] = None
    doeblin: Optional[DoeblinCertificate] = None
    drift: Optional[DriftCertificate] = None
    minorization: Optional[MinorizationCertificate] = None
    multiplier: Optional[MultiplierSpec] = None

    def to_dict(self) -> dict:
        data = self.kernel.to_dict()
        if self.weight is not None:
            data["weight"] = self.weight.to_dict()
        certs: dict[str, Any] = {}
        if self.doeblin is not None:
            certs["doeblin"] = {
                "ell": self.doeblin.ell,
                "nu": _measure_dict(self.doeblin.nu),
                "eta": self.doeblin.eta,
                "rho": self.doeblin.rho,
            }
        if self.drift is not None:
            certs["drift"] = {
                "C": sorted(self.drift.C),
                "r1": self.drift.r1,
                "eta": self.drift.eta,
            }
        if self.minorization is not None:
            minor = self.minorization
            block: dict[str, Any] = {
                "C": sorted(minor.C),
                "b": minor.b,
                "nu": _measure_dict(minor.nu),
            }
            if not _is_constant_alpha(minor):
                block["alpha"] = _alpha_rows(minor.alpha)
            certs["minorization"] = block
        if certs:
            data["certificates"] = certs
        if self.multiplier is not None:
            data["multiplier"] = self.multiplier.to_dict()
        return data


def _measure_dict(mu: AtomicMeasure) -> dict:
    data = mu.to_dict()
    if data["tail"] == 0.0:
        del data["tail"]
    return data


def _is_constant_alpha(minor: MinorizationCertificate) -> bool:
    reference = DensityKernel.constant(minor.nu).alpha
    return (minor.alpha != reference).nnz == 0


def _alpha_rows(alpha: sp.csr_matrix) -> list[dict]:
    rows = []
    for x in range(alpha.shape[0]):
        lo, hi = alpha.indptr[x], alpha.indptr[x + 1]
        if hi > lo:
            rows.append(
                {
                    "row": x,
                    "index": [int(i) for i in alpha.indices[lo:hi]],
                    "weight": [float(v) for v in alpha.data[lo:hi]],
                }
            )
    return rows


# Parsing helpers; `path` is the dotted field path used in error messages


def _get(data: Any, key: str, path: str, required: bool = True) -> Any:
    if not isinstance(data, dict):
        raise SpecFileError("expected an object", field=path)
    if key not in data:
        if required:
            raise SpecFileError("missing required field", field=f"{path}.{key}".lstrip("."))
        return None
    return data[key]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecFileError(f"expected a number, got {value!r}", field=path)
    return float(value)


def _weight_value(value: Any, path: str) -> Union[float, complex]:
    """A real weight or an [re, im] pair."""
    if isinstance(value, list):
        if len(value) != 2:
            raise SpecFileError(f"expected a number or an [re, im] pair, got {value!r}", field=path)
        return complex(_number(value[0], path), _number(value[1], path))
    return _number(value, path)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SpecFileError(f"expected an integer, got {value!r}", field=path)
    return value


def _list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise SpecFileError(f"expected a list, got {type(value).__name__}", field=path)
    return value


def _parse_space(data: Any) -> StateSpace:
    kind = _get(data, "type", "space")
    size = _integer(_get(data, "size", "space"), "space.size")
    try:
        return StateSpace.from_dict({"type": kind, "size": size})
    except ValueError as e:
        raise SpecFileError(str(e).splitlines()[0], field="space") from e


def _parse_measure(space: StateSpace, data: Any, path: str) -> AtomicMeasure:
    index = [_integer(i, f"{path}.index") for i in _list(_get(data, "index", path), f"{path}.index")]
    weight = [
        _weight_value(v, f"{path}.weight") for v in _list(_get(data, "weight", path), f"{path}.weight")
    ]
    dtype = np.complex128 if any(isinstance(v, complex) for v in weight) else np.float64
    tail = _get(data, "tail", path, required=False)
    try:
        return AtomicMeasure(
            space,
            np.array(index, dtype=np.int64),
            np.array(weight, dtype=dtype),
            0.0 if tail is None else _number(tail, f"{path}.tail"),
        )
    except ValueError as e:
        raise SpecFileError(str(e).splitlines()[0], field=path) from e


def parse_weight(space: StateSpace, data: Any) -> WeightFn:
    try:
        if isinstance(data, dict) and "geometric" in data:
            return WeightFn.geometric(space, _number(data["geometric"], "weight.geometric"))
        values = [_number(v, "weight.values") for v in _list(_get(data, "values", "weight"), "weight.values")]
        ratio = _get(data, "tail_ratio", "weight", required=False)
        return WeightFn(
            space,
            np.array(values),
            None if ratio is None else _number(ratio, "weight.tail_ratio"),
        )
    except ValueError as e:
        raise SpecFileError(str(e).splitlines()[0], field="weight") from e


def _parse_alpha(space: StateSpace, data: Any) -> sp.csr_matrix:
    n = space.n_states
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for k, entry in enumerate(_list(data, "certificates.minorization.alpha")):
        path = f"certificates.minorization.alpha[{k}]"
        x = _integer(_get(entry, "row", path), f"{path}.row")
        index = _list(_get(entry, "index", path), f"{path}.index")
        weight = _list(_get(entry, "weight", path), f"{path}.weight")
        if len(index) != len(weight):
            raise SpecFileError("index and weight lengths differ", field=path)
        rows.extend([x] * len(index))
        cols.extend(_integer(i, f"{path}.index") for i in index)
        vals.extend(_number(v, f"{path}.weight") for v in weight)
    try:
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    except ValueError as e:
        raise SpecFileError(str(e), field="certificates.minorization.alpha") from e


def _parse_certificates(
    space: StateSpace, weight: Optional[WeightFn], data: Any
) -> tuple[Optional[DoeblinCertificate], Optional[DriftCertificate], Optional[MinorizationCertificate]]:
    doeblin = drift = minor = None
    block = _get(data, "doeblin", "certificates", required=False)
    if block is not None:
        path = "certificates.doeblin"
        try:
            doeblin = DoeblinCertificate(
                _integer(_get(block, "ell", path), f"{path}.ell"),
                _parse_measure(space, _get(block, "nu", path), f"{path}.nu"),
                _number(_get(block, "eta", path), f"{path}.eta"),
                _number(_get(block, "rho", path), f"{path}.rho"),
            )
        except ValueError as e:
            raise SpecFileError(str(e).splitlines()[0], field=path) from e

    block = _get(data, "drift", "certificates", required=False)
    if block is not None:
        path = "certificates.drift"
        if weight is None:
            raise SpecFileError("a drift certificate needs a top-level weight", field=path)
        states = [_integer(x, f"{path}.C") for x in _list(_get(block, "C", path), f"{path}.C")]
        try:
            drift = DriftCertificate(
                frozenset(states),
                weight,
                _number(_get(block, "r1", path), f"{path}.r1"),
                _number(_get(block, "eta", path), f"{path}.eta"),
            )
        except ValueError as e:
            raise SpecFileError(str(e).splitlines()[0], field=path) from e

    block = _get(data, "minorization", "certificates", required=False)
    if block is not None:
        path = "certificates.minorization"
        states = [_integer(x, f"{path}.C") for x in _list(_get(block, "C", path), f"{path}.C")]
        nu = _parse_measure(space, _get(block, "nu", path), f"{path}.nu")
        b = _number(_get(block, "b", path), f"{path}.b")
        alpha_block = _get(block, "alpha", path, required=False)
        try:
            if alpha_block is None:
                minor = MinorizationCertificate.constant(states, b, nu)
            else:
                minor = MinorizationCertificate(frozenset(states), b, nu, _parse_alpha(space, alpha_block))
        except ValueError as e:
            raise SpecFileError(str(e).splitlines()[0], field=path) from e
    return doeblin, drift, minor


def parse_spec(text: str) -> KernelSpec:
    """Parse a spec document.

    Raises:
        SpecFileError: With the line of a syntax error or the field path
            of a semantic one.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecFileError(e.msg, line=e.lineno) from e
    if not isinstance(data, dict):
        raise SpecFileError("top level must be an object", line=1)

    space = _parse_space(_get(data, "space", ""))
    markov = _get(data, "markov", "", required=False)
    if markov is not None and not isinstance(markov, bool):
        raise SpecFileError(f"expected true/false, got {markov!r}", field="markov")
    reach = _get(data, "tail_reach", "", required=False)
    tail_reach = 0 if reach is None else _integer(reach, "tail_reach")

    raw_rows = _list(_get(data, "rows", ""), "rows")
    if len(raw_rows) != space.n_states:
        raise SpecFileError(f"expected {space.n_states} rows, got {len(raw_rows)}", field="rows")
    rows = [_parse_measure(space, row, f"rows[{x}]") for x, row in enumerate(raw_rows)]
    try:
        kernel = Kernel.from_rows(space, rows, markov=bool(markov), tail_reach=tail_reach)
    except (ValueError, NotMarkov) as e:
        raise SpecFileError(str(e).splitlines()[0], field="rows") from e

    weight_block = _get(data, "weight", "", required=False)
    weight = None if weight_block is None else parse_weight(space, weight_block)

    cert_block = _get(data, "certificates", "", required=False)
    doeblin = drift = minor = None
    if cert_block is not None:
        doeblin, drift, minor = _parse_certificates(space, weight, cert_block)

    multiplier = None
    mult_block = _get(data, "multiplier", "", required=False)
    if mult_block is not None:
        xi = [_number(v, "multiplier.xi") for v in _list(_get(mult_block, "xi", "multiplier"), "multiplier.xi")]
        if len(xi) != space.n_states:
            raise SpecFileError(f"expected {space.n_states} values", field="multiplier.xi")
        multiplier = MultiplierSpec(tuple(xi), _number(_get(mult_block, "t", "multiplier"), "multiplier.t"))

    return KernelSpec(kernel, weight, doeblin, drift, minor, multiplier)


def emit_spec(spec: KernelSpec) -> str:
    return json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n"


def load_spec(path: Path) -> KernelSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise SpecFileError(f"cannot read {path}: {e.strerror}") from e
    return parse_spec(text)


def save_spec(spec: KernelSpec, path: Path) -> None:
    Path(path).write_text(emit_spec(spec), encoding="utf-8")


def load_certificate(spec: KernelSpec, path: Path, kind: str) -> KernelSpec:
    """Replace one certificate of `spec` with the block stored in a JSON file.

    The file holds a single block in the layout of the `certificates`
    entry named by kind ("doeblin", "drift" or "minorization").
    """
    if kind not in ("doeblin", "drift", "minorization"):
        raise ValueError(f"Unknown certificate kind: {kind}")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise SpecFileError(f"cannot read {path}: {e.strerror}") from e
    try:
        block = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecFileError(e.msg, line=e.lineno) from e
    doeblin, drift, minor = _parse_certificates(spec.kernel.space, spec.weight, {kind: block})
    return KernelSpec(
        spec.kernel,
        spec.weight,
        doeblin if kind == "doeblin" else spec.doeblin,
        drift if kind == "drift" else spec.drift,
        minor if kind == "minorization" else spec.minorization,
        spec.multiplier,
    )
