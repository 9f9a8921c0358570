"""Tests for kernel spec files."""

import json

import numpy as np
import pytest

from src import specfile
from src.builtin_kernels import build_reflected_walk, two_state
from src.errors import SpecFileError
from src.kernel import fourier_kernel
from src.models import KernelKind


def finite_spec(**extra) -> dict:
    data = {
        "space": {"type": "finite", "size": 2},
        "markov": True,
        "rows": [
            {"index": [0, 1], "weight": [0.9, 0.1]},
            {"index": [0, 1], "weight": [0.2, 0.8]},
        ],
    }
    data.update(extra)
    return data


def test_parse_finite_spec():
    spec = specfile.parse_spec(json.dumps(finite_spec()))
    assert spec.kernel.n_states == 2
    assert spec.kernel.markov
    np.testing.assert_allclose(spec.kernel.to_dense().real, [[0.9, 0.1], [0.2, 0.8]])
    assert spec.weight is None
    assert spec.drift is None


def test_emit_is_canonical():
    """Parse followed by emit reproduces an emitted file byte for byte."""
    text = specfile.emit_spec(build_reflected_walk(0.3, 50).to_spec())
    assert text.endswith("\n")
    assert specfile.emit_spec(specfile.parse_spec(text)) == text


def test_walk_spec_keeps_certificates():
    walk = build_reflected_walk(0.3, 50)
    spec = specfile.parse_spec(specfile.emit_spec(walk.to_spec()))
    assert spec.drift is not None and spec.minorization is not None
    assert spec.drift.C == frozenset({0})
    assert spec.drift.r1 == walk.r1
    assert spec.minorization.b == 1.0
    # constant alpha is not written out
    data = json.loads(specfile.emit_spec(spec))
    assert "alpha" not in data["certificates"]["minorization"]


def test_syntax_error_reports_line():
    text = '{\n  "space": {"type": "finite", "size": 1},\n  "rows": [,]\n}\n'
    with pytest.raises(SpecFileError) as exc:
        specfile.parse_spec(text)
    assert exc.value.line == 3
    assert str(exc.value).startswith("line 3")


def test_top_level_must_be_object():
    with pytest.raises(SpecFileError) as exc:
        specfile.parse_spec("[1, 2]")
    assert exc.value.line == 1


def test_missing_field_reports_path():
    data = finite_spec(space={"type": "finite"})
    with pytest.raises(SpecFileError, match="missing required field") as exc:
        specfile.parse_spec(json.dumps(data))
    assert exc.value.field == "space.size"

    data = finite_spec()
    del data["rows"]
    with pytest.raises(SpecFileError) as exc:
        specfile.parse_spec(json.dumps(data))
    assert exc.value.field == "rows"


def test_wrong_row_count():
    data = finite_spec()
    data["rows"] = data["rows"][:1]
    with pytest.raises(SpecFileError, match="expected 2 rows, got 1") as exc:
        specfile.parse_spec(json.dumps(data))
    assert exc.value.field == "rows"


def test_bad_row_value_reports_row_path():
    data = finite_spec()
    data["rows"][1]["weight"] = [0.2, "x"]
    with pytest.raises(SpecFileError) as exc:
        specfile.parse_spec(json.dumps(data))
    assert exc.value.field == "rows[1].weight"


def test_complex_rows_keep_their_phase():
    """Fourier-twisted kernels are written with [re, im] pairs and read back unchanged."""
    P_t = fourier_kernel(two_state(0.1, 0.2), [0.0, 1.0], 0.7)
    text = specfile.emit_spec(specfile.KernelSpec(P_t))
    row = json.loads(text)["rows"][0]
    assert row["weight"][1] == pytest.approx([0.1 * np.cos(0.7), 0.1 * np.sin(0.7)])

    parsed = specfile.parse_spec(text)
    assert parsed.kernel.kind is KernelKind.COMPLEX
    np.testing.assert_allclose(parsed.kernel.to_dense(), P_t.to_dense())
    assert specfile.emit_spec(parsed) == text


def test_bad_complex_pair_reports_row_path():
    data = finite_spec(markov=False)
    data["rows"][0]["weight"] = [[0.9, 0.0, 1.0], 0.1]
    with pytest.raises(SpecFileError) as exc:
        specfile.parse_spec(json.dumps(data))
    assert exc.value.field == "rows[0].weight"


def test_markov_flag_checked():
    data = finite_spec()
    data["rows"][0]["weight"] = [0.5, 0.1]
    with pytest.raises(SpecFileError) as exc:
        specfile.parse_spec(json.dumps(data))
    assert exc.value.field == "rows"


def test_drift_needs_weight():
    data = finite_spec(certificates={"drift": {"C": [0], "r1": 1.1, "eta": 1.0}})
    with pytest.raises(SpecFileError, match="weight") as exc:
        specfile.parse_spec(json.dumps(data))
    assert exc.value.field == "certificates.drift"


def test_weight_blocks():
    spec = specfile.parse_spec(json.dumps(finite_spec(weight={"geometric": 2.0})))
    np.testing.assert_allclose(spec.weight.values, [1.0, 2.0])

    spec = specfile.parse_spec(json.dumps(finite_spec(weight={"values": [1.0, 3.0]})))
    np.testing.assert_allclose(spec.weight.values, [1.0, 3.0])


def test_multiplier_block():
    data = finite_spec(multiplier={"xi": [0.0, 1.0], "t": 0.5})
    spec = specfile.parse_spec(json.dumps(data))
    assert spec.multiplier == specfile.MultiplierSpec((0.0, 1.0), 0.5)
    assert spec.multiplier.multiplier.norm_bound == pytest.approx(1.0)

    data = finite_spec(multiplier={"xi": [0.0], "t": 0.5})
    with pytest.raises(SpecFileError) as exc:
        specfile.parse_spec(json.dumps(data))
    assert exc.value.field == "multiplier.xi"


def test_load_spec_missing_file(tmp_path):
    with pytest.raises(SpecFileError, match="cannot read"):
        specfile.load_spec(tmp_path / "missing.json")


def test_save_and_load(tmp_path):
    path = tmp_path / "chain.json"
    spec = specfile.KernelSpec(two_state(0.1, 0.2))
    specfile.save_spec(spec, path)
    loaded = specfile.load_spec(path)
    np.testing.assert_allclose(loaded.kernel.to_dense(), spec.kernel.to_dense())


def test_load_certificate_replaces_block(tmp_path):
    walk = build_reflected_walk(0.3, 50)
    path = tmp_path / "drift.json"
    path.write_text(json.dumps({"C": [0], "r1": walk.r1, "eta": 1.2}))

    spec = specfile.load_certificate(walk.to_spec(), path, "drift")
    assert spec.drift.eta == 1.2
    assert spec.minorization is walk.minorization

    with pytest.raises(ValueError, match="Unknown certificate kind"):
        specfile.load_certificate(walk.to_spec(), path, "lyapunov")


def test_load_certificate_syntax_error(tmp_path):
    path = tmp_path / "drift.json"
    path.write_text('{"C": [0],\n "r1": }')
    with pytest.raises(SpecFileError) as exc:
        specfile.load_certificate(build_reflected_walk(0.3, 50).to_spec(), path, "drift")
    assert exc.value.line == 2
