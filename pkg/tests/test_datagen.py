"""Synthetic garments, renderer, prompts and dataset manifests."""

import numpy as np
import pytest

from vlg.datagen.dataset import Dataset, DatasetConfig, build_dataset
from vlg.datagen.garments import ParamRecord, build_pattern, make_rng, sample_garment
from vlg.datagen.prompts import TIERS, garment_phrase, gen_prompt, word_ids
from vlg.datagen.render import DEFAULT_SPEC, AXES, RenderSpec, perturb_spec, read_pgm, render, write_pgm
from vlg.errors import ConfigError
from vlg.metrics import measure_attributes
from vlg.pattern import serialize_pattern, validate


def bbox(img, bg=255):
    ys, xs = np.nonzero(img != bg)
    return xs.min(), xs.max(), ys.min(), ys.max()


# ---------------------------------------------------------------- garments

def test_skirt_vertices():
    p = build_pattern(ParamRecord("skirt", waist=20.0, hem=40.0, length=60.0, hem_offset=0.0))
    assert [q.name for q in p.panels] == ["back", "front"]
    for q in p.panels:
        assert [e.start for e in q.edges] == [(-40.0, 0.0), (40.0, 0.0), (20.0, 60.0), (-20.0, 60.0)]
        assert all(e.control is None for e in q.edges)
    curved = build_pattern(ParamRecord("skirt", waist=20.0, hem=40.0, length=60.0, hem_offset=5.0))
    assert curved.panels[0].edges[0].control == (0.0, -5.0)


@pytest.mark.parametrize("family", ["skirt", "tee"])
def test_sampled_garments_valid_and_classified(family):
    rng = make_rng(11)
    for _ in range(100):
        p, params = sample_garment(family, rng)
        assert validate(p).ok
        assert measure_attributes(p).garment_class == family
        counts = sorted(len(q.edges) for q in p.panels)
        assert counts in ([[4, 4]] if family == "skirt" else [[6, 6], [4, 4, 6, 6]])


def test_same_seed_same_bytes():
    a = serialize_pattern(sample_garment("tee", make_rng(5))[0])
    b = serialize_pattern(sample_garment("tee", make_rng(5))[0])
    assert a == b


def test_rng_is_philox():
    assert isinstance(make_rng(0).bit_generator, np.random.Philox)


# ---------------------------------------------------------------- renderer

@pytest.mark.parametrize("seed", range(6))
def test_default_height_is_51px(seed):
    rng = make_rng(seed)
    _, params = sample_garment(("skirt", "tee")[seed % 2], rng)
    x0, x1, y0, y1 = bbox(render(params))
    assert y1 - y0 + 1 == 51


def test_offset_shifts_exactly():
    params = ParamRecord("skirt", waist=15.0, hem=20.0, length=80.0, hem_offset=0.0)
    a = render(params)
    b = render(params, RenderSpec(offset=(5, 0)))
    assert np.array_equal(a[:, :-5], b[:, 5:])
    x0, _, _, _ = bbox(a)
    assert bbox(b)[0] == x0 + 5


def test_render_deterministic_and_pgm(tmp_path):
    _, params = sample_garment("tee", make_rng(4))
    spec = RenderSpec(background="noise", fill="dots4", noise_seed=9)
    img = render(params, spec)
    assert img.dtype == np.uint8 and img.shape == (64, 64)
    assert np.array_equal(img, render(params, spec))
    write_pgm(tmp_path / "x.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "x.pgm"), img)


def test_perturb_spec_contract():
    for axis in AXES:
        assert perturb_spec(axis, 0.0, make_rng(0)) == DEFAULT_SPEC
        assert perturb_spec(axis, 1.0, make_rng(3)) == perturb_spec(axis, 1.0, make_rng(3))
    rng = make_rng(1)
    for _ in range(200):
        s = perturb_spec("position", 1.0, rng)
        assert max(abs(s.offset[0]), abs(s.offset[1])) <= 16 and s.offset != (0, 0)
        z = perturb_spec("scale", 1.0, rng).zoom
        assert 0.5 <= z <= 1.5
    assert perturb_spec("visual", 1.0, rng).background != "white"
    assert perturb_spec("appearance", 1.0, rng).fill != "gray64"
    with pytest.raises(ValueError):
        perturb_spec("rotation", 1.0, rng)
    with pytest.raises(ValueError):
        perturb_spec("scale", 1.5, rng)


# ----------------------------------------------------------------- prompts

def test_prompt_tiers():
    params = ParamRecord("skirt", waist=20.0, hem=45.0, length=85.0, hem_offset=4.0)
    precise = gen_prompt(params, "precise", make_rng(0))
    assert precise.constraints == {"garment_class": "skirt", "length_bucket": "long",
                                   "flare_bucket": "flared", "hem_curved": True}
    assert garment_phrase(precise.constraints) in precise.text
    assert {"maxi", "flared", "skirt", "rounded"} <= set(precise.text.split())
    vague = gen_prompt(params, "vague", make_rng(0))
    assert vague.constraints == {"garment_class": "skirt"}
    medium = gen_prompt(params, "medium", make_rng(0))
    assert len(medium.constraints) == 2
    assert gen_prompt(params, "precise", make_rng(8)).text == gen_prompt(params, "precise", make_rng(8)).text


def test_prompt_words_in_vocabulary():
    rng = make_rng(2)
    for k in range(60):
        _, params = sample_garment(("skirt", "tee")[k % 2], rng)
        for tier in TIERS:
            for heldout in (False, True):
                assert word_ids(gen_prompt(params, tier, rng, heldout=heldout).text)


# ----------------------------------------------------------------- dataset

SMALL = DatasetConfig(train=12, val=6, test_per_axis=6, seed=3)


def test_small_manifest_rows_and_determinism(tmp_path):
    build_dataset(SMALL, tmp_path / "a")
    build_dataset(SMALL, tmp_path / "b")
    a, b = Dataset(tmp_path / "a"), Dataset(tmp_path / "b")
    assert len(a.rows) == 12 + 6 + 5 * 6
    assert a.manifest_bytes() == b.manifest_bytes()
    for r in a.rows[::7]:
        assert (a.root / r.pattern_path).read_bytes() == (b.root / r.pattern_path).read_bytes()
        assert np.array_equal(a.image(r), b.image(r))
    assert a.config == SMALL


def test_variants(tmp_path):
    build_dataset(SMALL, tmp_path / "base")
    base = Dataset(tmp_path / "base")
    assert {r.tier for r in base.split("train")} == {"precise"}
    cfg = DatasetConfig(train=30, val=6, test_per_axis=6, seed=3, variant="+textures")
    build_dataset(cfg, tmp_path / "tex")
    tex = Dataset(tmp_path / "tex")
    assert len({r.tier for r in tex.split("train")}) > 1
    assert {r.axis for r in tex.split("train")} == {"none", "appearance"}
    # garments are shared across variants
    assert [r.seed for r in base.split("val")] == [r.seed for r in tex.split("val")]


def test_language_axis_uses_tier_triples(tmp_path):
    build_dataset(SMALL, tmp_path)
    ds = Dataset(tmp_path)
    lang = ds.split("test-axis:language")
    assert [r.tier for r in lang] == list(TIERS) * 2
    assert lang[0].seed == lang[2].seed != lang[3].seed


def test_full_manifest_arithmetic(toy_dataset):
    assert len(toy_dataset.rows) == 2000 + 500 + 5 * 200
    assert toy_dataset.config.seed == 7


@pytest.mark.parametrize("bad", [dict(train=0), dict(variant="fancy"), dict(families=("dress",)),
                                 dict(axis_magnitude=0.0)])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        DatasetConfig(**bad)
