import os
from pathlib import Path

import numpy as np
import pytest

import verif

FIXTURES = Path(os.environ.get("VERIF_FIXTURES_DIR", Path(__file__).resolve().parents[2] / "fixtures"))
E2E = FIXTURES / "e2e"
IMAGE = FIXTURES / "image"


@pytest.fixture(scope="module")
def model():
    return verif.Network.load(E2E / "model.onnx")


@pytest.fixture(scope="module")
def robust():
    return verif.Property.load(E2E / "robust.dnnp")


def test_network_roundtrip(model, tmp_path):
    assert model.input_shape == [1, 4]
    x = np.random.default_rng(0).uniform(-1, 1, size=(1, 4))
    y = model(x)
    assert y.shape == (1, 3)
    model.save(tmp_path / "copy.onnx")
    again = verif.Network.load(tmp_path / "copy.onnx")
    np.testing.assert_allclose(again(x), y, atol=1e-6)


def test_simplify_preserves_outputs(model):
    simple, report = model.simplify()
    assert report["nodes_after"] <= report["nodes_before"]
    assert set(report["applications"]) >= {"fuse_batch_norm", "move_activations_backward"}
    x = np.random.default_rng(1).uniform(-1, 1, size=(8, 1, 4))
    for row in x:
        np.testing.assert_allclose(simple(row), model(row), atol=1e-9)


def test_property_metadata(robust):
    assert robust.parameters == ["epsilon"]
    assert robust.networks == ["N"]


def test_reduce_and_builtin_verifiers(model, robust):
    problems = verif.reduce(robust, {"N": model}, {"epsilon": 0.01})
    assert len(problems) == 2
    for rp in problems:
        a, b = rp.input
        assert a.shape == (8, 4) and b.shape == (8,)
        assert rp.output[0].shape[1] == 3
        assert rp.network.output_shape == [1, 2]
        assert verif.ibp(rp).status == "unsat"

    wide = verif.reduce(robust, {"N": model}, {"epsilon": 0.5})
    outcomes = [verif.sample(rp, budget=20000, seed=1) for rp in wide]
    found = [o for o in outcomes if o.status == "sat"]
    assert found
    x = found[0].counterexample
    assert x.shape == (1, 4)
    assert not robust.holds_at(x, {"N": model}, {"epsilon": 0.5})


def test_verify_end_to_end(robust):
    networks = {"N": str(E2E / "model.onnx")}
    report = verif.verify(robust, networks, "ibp", {"epsilon": 0.01})
    assert report.status == "unsat"
    assert report.problems == 2
    assert report.counterexample is None

    report = verif.verify(robust, networks, "sample", {"epsilon": 0.5}, seed=3, jobs=2)
    assert report.status == "sat"
    assert not robust.holds_at(report.counterexample, networks, {"epsilon": 0.5})


def test_errors(robust, model):
    with pytest.raises(verif.VerifError) as info:
        verif.reduce(robust, {"N": model})
    assert info.value.code == "MissingParameter"
    with pytest.raises(verif.VerifError) as info:
        verif.verify(robust, {"N": model}, "no-such-verifier", {"epsilon": 0.1})
    assert info.value.code == "UnknownBackend"
    with pytest.raises(verif.VerifError) as info:
        verif.Property.parse("import os\n")
    assert info.value.code == "UnknownImport"


def test_writers(model, robust, tmp_path):
    rp = verif.reduce(robust, {"N": model}, {"epsilon": 0.05})[0]
    rp.write_nnet(tmp_path / "p.nnet")
    rp.write_rlv(tmp_path / "p.rlv")
    rp.write_vnnlib(tmp_path / "p.onnx", tmp_path / "p.vnnlib")
    assert (tmp_path / "p.nnet").read_text().startswith("//")
    assert "Assert" in (tmp_path / "p.rlv").read_text()
    assert "(declare-const X_0 Real)" in (tmp_path / "p.vnnlib").read_text()
    rewritten = verif.Network.load(tmp_path / "p.onnx")
    x = np.zeros((1, 4))
    np.testing.assert_allclose(rewritten(x), rp.network(x), atol=1e-6)


def test_image_property_structure():
    prop = verif.Property.load(IMAGE / "property.dnnp")
    net = verif.Network.load(IMAGE / "model.onnx")
    problems = verif.reduce(prop, {"N": net}, {"epsilon": 0.01})
    assert len(problems) == 9
    assert all(rp.output[0].shape == (1, 10) for rp in problems)
    assert all(rp.input[0].shape == (256, 64) for rp in problems)


def test_npy_roundtrip(tmp_path):
    a = np.arange(6, dtype=np.float64).reshape(2, 3) / 7
    verif.save_npy(tmp_path / "a.npy", a)
    np.testing.assert_array_equal(np.load(tmp_path / "a.npy"), a)
    np.testing.assert_array_equal(verif.load_npy(tmp_path / "a.npy"), a)


def test_inference_matches_onnxruntime(model):
    ort = pytest.importorskip("onnxruntime")
    session = ort.InferenceSession(str(E2E / "model.onnx"))
    name = session.get_inputs()[0].name
    x = np.random.default_rng(2).uniform(-1, 1, size=(1, 4)).astype(np.float32)
    (expected,) = session.run(None, {name: x})
    np.testing.assert_allclose(model(x.astype(np.float64)), expected, atol=1e-5)


def test_verifier_listing():
    names = verif.verifiers()
    assert "ibp" in names and "sample" in names
