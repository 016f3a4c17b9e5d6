"""Text document format: typed access and bit-exact round trips."""

import numpy as np
import pytest

from ppsm.serialize import Doc, DocumentError


def _sample_doc() -> Doc:
    doc = Doc()
    doc.set_str("kind", "sample")
    doc.set_int("count", 42)
    doc.set_float("ratio", 0.1 + 0.2)
    doc.set_float("tiny", 5e-324)
    doc.set_float("neg_inf", -np.inf)
    doc.set_vec("empty", [])
    doc.set_vec("values", [1.0, -2.5, 1e300])
    doc.set_mat("grid", np.arange(6, dtype=float).reshape(2, 3) / 7.0)
    return doc


def test_roundtrip_bit_exact():
    doc = _sample_doc()
    text = doc.dumps()
    back = Doc.loads(text)
    assert back.dumps() == text
    assert back.get_int("count") == 42
    assert back.get_float("ratio") == 0.1 + 0.2
    assert back.get_float("tiny") == 5e-324
    assert back.get_float("neg_inf") == -np.inf
    assert back.get_vec("empty").size == 0
    assert np.array_equal(back.get_vec("values"), doc.get_vec("values"))
    assert np.array_equal(back.get_mat("grid"), doc.get_mat("grid"))


def test_nan_roundtrip():
    doc = Doc()
    doc.set_vec("v", [np.nan, 1.0])
    back = Doc.loads(doc.dumps())
    v = back.get_vec("v")
    assert np.isnan(v[0]) and v[1] == 1.0


def test_header_required():
    with pytest.raises(DocumentError):
        Doc.loads("i x 1\n")


def test_wrong_type_access():
    doc = _sample_doc()
    with pytest.raises(DocumentError):
        doc.get_vec("count")
    with pytest.raises(DocumentError):
        doc.get_int("missing")


def test_malformed_records():
    with pytest.raises(DocumentError):
        Doc.loads("ppsm-doc 1\nv short 3\n1 2\n")
    with pytest.raises(DocumentError):
        Doc.loads("ppsm-doc 1\nq weird 1\n")


def test_key_validation():
    doc = Doc()
    with pytest.raises(DocumentError):
        doc.set_int("has space", 1)
    with pytest.raises(DocumentError):
        doc.set_str("multi", "a\nb")
