import json

import pytest

from ctxasm.context import (
    DEFAULT_SEPARATOR,
    PRESET_NAMES,
    CategoryQuota,
    ExperimentConfig,
    SplitError,
    build_contextual_input,
    export_split,
    generate_splits,
    load_preset,
    load_split_file,
    split_manifest_dict,
)
from ctxasm.corpus import ContextCategory, Sample, build_corpus


def sample(id, line_no, category=ContextCategory.NO_CONTEXT, context=(), intent=None, snippet=None):
    return Sample(
        id=id,
        program_id="p1",
        line_no=line_no,
        intent=intent or f"intent number {line_no}",
        snippet=snippet or f"mov eax, {line_no}",
        category=category,
        context_intents=tuple(context),
    )


def no_context_corpus(n):
    return build_corpus([sample(f"s{i}", i) for i in range(1, n + 1)])


# ------------------------------------------------------ contextual inputs


def test_build_contextual_input_2to1():
    s = sample(
        "a",
        1,
        category=ContextCategory.CTX_2TO1,
        context=("clear the eax register",),
        intent="move 22 into the lower byte",
        snippet="mov al,22",
    )
    built = build_contextual_input(s)
    assert built.input_text == "clear the eax register _BREAK move 22 into the lower byte"
    assert built.target == "mov al,22"


def test_build_contextual_input_3to1_order():
    s = sample(
        "a",
        1,
        category=ContextCategory.CTX_3TO1,
        context=("move esi in eax", "increment it"),
        intent="add the result to eax",
    )
    built = build_contextual_input(s)
    assert built.input_text == "move esi in eax _BREAK increment it _BREAK add the result to eax"
    # current intent is always the final segment
    assert built.input_text.rsplit(f" {DEFAULT_SEPARATOR} ", 1)[-1] == s.intent


def test_build_contextual_input_no_context():
    s = sample("a", 1, intent="negate the result", snippet="not esi")
    assert build_contextual_input(s).input_text == "negate the result"


def test_custom_separator():
    s = sample("a", 1, category=ContextCategory.UNN_2TO1, context=("noise",), intent="act")
    assert build_contextual_input(s, separator="<SEP>").input_text == "noise <SEP> act"


def test_separator_count_matches_arity():
    for category in ContextCategory:
        context = tuple(f"ctx {i}" for i in range(category.context_arity))
        s = sample("a", 1, category=category, context=context)
        built = build_contextual_input(s)
        assert built.input_text.split().count(DEFAULT_SEPARATOR) == category.context_arity


# ---------------------------------------------------------------- quotas


def test_fraction_quota_floor_rule():
    corpus = no_context_corpus(10)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(0.8, 0.1, 0.1)},
        seed=1,
    )
    split = generate_splits(corpus, config)
    assert (len(split.train), len(split.dev), len(split.test)) == (8, 1, 1)


def test_fraction_quota_remainder_goes_to_train():
    corpus = no_context_corpus(12)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(0.8, 0.1, 0.1)},
        seed=1,
    )
    split = generate_splits(corpus, config)
    # floor(1.2) = 1 for dev and test; train picks up the leftovers
    assert (len(split.train), len(split.dev), len(split.test)) == (10, 1, 1)


def test_fraction_quota_must_sum_to_one():
    corpus = no_context_corpus(10)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(0.5, 0.1, 0.1)},
        seed=1,
    )
    with pytest.raises(SplitError, match="sum to 1"):
        generate_splits(corpus, config)


def test_absolute_quota_unsatisfiable_names_category_and_shortfall():
    corpus = no_context_corpus(5)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(5, 1, 1)},
        seed=1,
    )
    with pytest.raises(SplitError, match="no_context.*short by 2"):
        generate_splits(corpus, config)


def test_absorb_train_shortfall_flags_discrepancy():
    corpus = no_context_corpus(5)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(5, 1, 1)},
        seed=1,
        absorb_train_shortfall=True,
    )
    split = generate_splits(corpus, config)
    assert (len(split.train), len(split.dev), len(split.test)) == (3, 1, 1)
    assert len(split.discrepancies) == 1
    d = split.discrepancies[0]
    assert d.kind == "train_shortfall"
    assert (d.requested, d.materialized) == (5, 3)


def test_dev_test_quota_never_absorbed():
    corpus = no_context_corpus(3)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(0, 2, 2)},
        seed=1,
        absorb_train_shortfall=True,
    )
    with pytest.raises(SplitError, match="dev\\+test"):
        generate_splits(corpus, config)


def test_unused_samples_flagged():
    corpus = no_context_corpus(10)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(6, 1, 1)},
        seed=1,
    )
    split = generate_splits(corpus, config)
    kinds = {d.kind for d in split.discrepancies}
    assert kinds == {"unused_samples"}


def test_categories_without_quota_are_excluded():
    samples = [sample(f"s{i}", i) for i in range(1, 6)]
    samples.append(
        sample("c1", 6, category=ContextCategory.CTX_2TO1, context=("previous",))
    )
    corpus = build_corpus(samples)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(3, 1, 1)},
        seed=1,
    )
    split = generate_splits(corpus, config)
    ids = {i.sample_id for i in split.train + split.dev + split.test}
    assert "c1" not in ids


# ------------------------------------------------------------ determinism


def test_split_deterministic():
    corpus = no_context_corpus(50)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(40, 5, 5)},
        seed=99,
    )
    a = generate_splits(corpus, config)
    b = generate_splits(corpus, config)
    assert a == b


def test_split_changes_with_seed():
    corpus = no_context_corpus(50)
    base = {ContextCategory.NO_CONTEXT: CategoryQuota(40, 5, 5)}
    a = generate_splits(corpus, ExperimentConfig("toy", base, seed=1))
    b = generate_splits(corpus, ExperimentConfig("toy", base, seed=2))
    assert {i.sample_id for i in a.test} != {i.sample_id for i in b.test}


def test_split_disjoint():
    corpus = no_context_corpus(30)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(20, 5, 5)},
        seed=3,
    )
    split = generate_splits(corpus, config)
    train = {i.sample_id for i in split.train}
    dev = {i.sample_id for i in split.dev}
    test = {i.sample_id for i in split.test}
    assert not (train & dev or train & test or dev & test)
    assert len(train | dev | test) == 30


# ----------------------------------------------------------------- export


def test_export_empty_split(tmp_path):
    corpus = no_context_corpus(1)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(0, 0, 0)},
        seed=1,
    )
    split = generate_splits(corpus, config)
    paths = export_split(split, tmp_path)
    for name in ("train", "dev", "test"):
        assert paths[name].read_text() == ""
    manifest = json.loads(paths["manifest"].read_text())
    assert manifest["totals"] == {"train": 0, "dev": 0, "test": 0}


def test_export_line_counts_and_reload(tmp_path):
    corpus = no_context_corpus(5)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(3, 1, 1)},
        seed=1,
    )
    split = generate_splits(corpus, config)
    paths = export_split(split, tmp_path)
    assert len(paths["train"].read_text().splitlines()) == 3
    reloaded = load_split_file(paths["train"])
    assert tuple(reloaded) == split.train


def test_reexport_byte_identical(tmp_path):
    corpus = no_context_corpus(20)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(16, 2, 2)},
        seed=4,
    )
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    export_split(generate_splits(corpus, config), dir_a)
    export_split(generate_splits(corpus, config), dir_b)
    for name in ("train.jsonl", "dev.jsonl", "test.jsonl", "split_manifest.json"):
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()


def test_manifest_contents():
    corpus = no_context_corpus(10)
    config = ExperimentConfig(
        name="toy",
        quotas={ContextCategory.NO_CONTEXT: CategoryQuota(8, 1, 1)},
        seed=5,
    )
    split = generate_splits(corpus, config)
    manifest = split_manifest_dict(split)
    assert manifest["config"]["name"] == "toy"
    assert manifest["config"]["seed"] == 5
    assert manifest["corpus_hash"]
    assert manifest["counts"]["no_context"] == {"train": 8, "dev": 1, "test": 1}


# ----------------------------------------------------------------- presets


def test_all_presets_load():
    for name in PRESET_NAMES:
        config = load_preset(name)
        assert config.name == name
        assert config.quotas


def test_unknown_preset_rejected():
    with pytest.raises(SplitError, match="unknown experiment preset"):
        load_preset("ctx_4to1")


def test_preset_quota_cells():
    expected = {
        "missing_information": {ContextCategory.NO_CONTEXT: (770, 96, 96)},
        "ctx_2to1": {
            ContextCategory.NO_CONTEXT: (867, 48, 48),
            ContextCategory.CTX_2TO1: (180, 90, 90),
        },
        "ctx_3to1": {
            ContextCategory.NO_CONTEXT: (867, 48, 48),
            ContextCategory.CTX_3TO1: (81, 79, 79),
        },
        "unn_2to1": {
            ContextCategory.NO_CONTEXT: (867, 48, 48),
            ContextCategory.CTX_2TO1: (324, 18, 18),
            ContextCategory.UNN_2TO1: (103, 100, 100),
        },
        "unn_3to1": {
            ContextCategory.NO_CONTEXT: (867, 48, 48),
            ContextCategory.CTX_3TO1: (214, 12, 12),
            ContextCategory.UNN_3TO1: (103, 100, 100),
        },
    }
    for name, cells in expected.items():
        config = load_preset(name)
        assert set(config.quotas) == set(cells)
        for category, (train, dev, test) in cells.items():
            quota = config.quotas[category]
            assert (quota.train, quota.dev, quota.test) == (train, dev, test)


def test_config_file_round_trip(tmp_path):
    config = load_preset("ctx_2to1")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(config.to_dict()))
    assert ExperimentConfig.from_file(path) == config
