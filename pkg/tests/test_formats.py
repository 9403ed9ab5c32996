import math
from dataclasses import replace
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynmedian.formats import ExportError, ParseError, equivalent, export, parse
from dynmedian.instance import read_instance
from dynmedian.model import BINARY, Constraint, LinearModel, Variable, build_deterministic
from dynmedian.robust import UncertaintySpec, build_robust

from conftest import two_site

CORPUS = sorted((Path(__file__).parent / "data").glob("*.json"))


def truncated(model: LinearModel, width: int = 8) -> LinearModel:
    """``model`` with every name cut the way fixed MPS cuts it."""
    return LinearModel(
        tuple(replace(v, name=v.name[:width]) for v in model.variables),
        tuple(replace(c, name=c.name[:width]) for c in model.constraints),
        model.objective,
        model.objective_constant,
        model.name,
    )


def corpus_models():
    for path in CORPUS:
        inst = read_instance(path)
        yield path.stem, build_deterministic(inst)
        yield path.stem + "-padded", build_deterministic(inst, pad_transitions=True)
        spec = UncertaintySpec.from_fraction(inst, 0.1, 1.0)
        yield path.stem + "-robust", build_robust(inst, spec).model


MODELS = list(corpus_models())


@pytest.mark.parametrize("fmt", ["free-mps", "lp"])
@pytest.mark.parametrize("name, model", MODELS, ids=[m[0] for m in MODELS])
def test_corpus_round_trip(name, model, fmt):
    assert equivalent(parse(export(model, fmt), fmt), model)


@pytest.mark.parametrize("name, model", MODELS, ids=[m[0] for m in MODELS])
def test_corpus_fixed_mps(name, model):
    try:
        text = export(model, "mps")
    except ExportError as exc:
        # only acceptable when 8-character names really collide
        short = [v.name[:8] for v in model.variables] + [c.name[:8] for c in model.constraints]
        assert len(set(short)) < len(short), exc
        return
    assert equivalent(parse(text, "mps"), truncated(model))


def test_two_by_two_has_22_rows():
    model = build_deterministic(two_site(0.5))
    for fmt in ("mps", "free-mps", "lp"):
        assert len(parse(export(model, fmt), fmt).constraints) == 22


def test_empty_model():
    empty = LinearModel((), (), ())
    for fmt in ("mps", "free-mps", "lp"):
        again = parse(export(empty, fmt), fmt)
        assert len(again.constraints) == 0 and len(again.variables) == 0


@pytest.mark.parametrize("fmt", ["mps", "free-mps", "lp"])
def test_idempotent(fmt):
    model = build_deterministic(two_site(6.0))
    text = export(model, fmt)
    assert export(parse(text, fmt), fmt) == text


def test_collision_lists_names():
    m = LinearModel((Variable("abcdefgh1"), Variable("abcdefgh2")), (), ((0, 1.0), (1, 1.0)))
    with pytest.raises(ExportError, match="abcdefgh1"):
        export(m, "mps")
    # free format keeps names verbatim
    assert equivalent(parse(export(m, "free-mps"), "free-mps"), m)


def test_lp_keyword_names_rejected():
    m = LinearModel((Variable("bin", BINARY, 0, 1),), (), ())
    with pytest.raises(ExportError, match="bin"):
        export(m, "lp")


def test_reserved_row_name():
    m = LinearModel((Variable("x"),), (Constraint("OBJ", ((0, 1.0),), "<=", 1.0),), ())
    with pytest.raises(ExportError):
        export(m, "free-mps")


def test_malformed_text():
    with pytest.raises(ParseError):
        parse("ROWS\n N OBJ\nCOLUMNS\n x OBJ one\nENDATA\n", "free-mps")
    with pytest.raises(ValueError):
        export(LinearModel((), (), ()), "xml")


def test_bounds_and_constant():
    m = LinearModel(
        (
            Variable("unb", lower=-math.inf),
            Variable("neg", lower=-3.0, upper=5.0),
            Variable("fx", lower=2.0, upper=2.0),
            Variable("up", upper=7.5),
            Variable("flag", BINARY, 0, 1),
        ),
        (Constraint("r1", ((0, 1.0), (1, -2.5)), ">=", -1.0), Constraint("r2", ((3, 1.0), (4, 1.0)), "=", 1.0)),
        ((0, 1.0), (2, 0.1)),
        objective_constant=4.25,
    )
    for fmt in ("mps", "free-mps", "lp"):
        assert equivalent(parse(export(m, fmt), fmt), m), fmt


names = st.text("abcxyz_0123456789", min_size=1, max_size=6).map(lambda s: "v" + s)
coef = st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: v != 0)


@st.composite
def models(draw):
    vnames = draw(st.lists(names, min_size=1, max_size=6, unique=True))
    variables = []
    for n in vnames:
        kind = draw(st.sampled_from(["c", "b"]))
        if kind == "b":
            variables.append(Variable(n, BINARY, 0.0, 1.0))
        else:
            lo = draw(st.sampled_from([0.0, -math.inf, -2.0]))
            hi = draw(st.sampled_from([math.inf, 3.0]))
            variables.append(Variable(n, lower=lo, upper=hi))
    nv = len(variables)
    rows = []
    for r in range(draw(st.integers(0, 4))):
        idx = draw(st.lists(st.integers(0, nv - 1), min_size=1, max_size=nv, unique=True))
        terms = tuple((j, draw(coef)) for j in sorted(idx))
        rows.append(Constraint(f"r{r}", terms, draw(st.sampled_from(["<=", ">=", "="])), draw(coef)))
    obj_idx = draw(st.lists(st.integers(0, nv - 1), max_size=nv, unique=True))
    objective = tuple((j, draw(coef)) for j in sorted(obj_idx))
    const = draw(st.sampled_from([0.0, 1.5, -7.0]))
    return LinearModel(tuple(variables), tuple(rows), objective, const)


@settings(max_examples=150, deadline=None)
@given(models(), st.sampled_from(["mps", "free-mps", "lp"]))
def test_random_models_round_trip(model, fmt):
    assert equivalent(parse(export(model, fmt), fmt), model)
