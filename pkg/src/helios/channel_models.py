"""Next-step channel predictors behind one interface, plus model persistence.

Every channel model consumes SequenceSample lists and produces an (n, 3)
prediction array (NaN for channels a model was not fitted on). Models are
saved in a single container format:

    magic "HNMD" | u8 version | u32 header length | header JSON | payloads

The header carries kind, spec, training metadata, and a tensor index
(name/shape/dtype); payloads are raw little-endian arrays in index order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import FORMAT_VERSION
from .cart import ForestModel, ForestSpec, TreeModel, TreeSpec, forest_fit, tree_fit
from .cnnlstm import CnnLstmSpec, TrainConfig, predict_batch, train
from .dataset import ChannelTriple, SequenceSample
from .errors import EmptyTrainingSet, FormatViolation
from .geo import center_offset
from .ndautodiff import ParameterSet, Tensor
from .svr import SvrModel, SvrSpec, Standardizer

MODEL_MAGIC = b"HNMD"

KIND_PERSISTENCE = "persistence"
KIND_TREE = "tree"
KIND_FOREST = "forest"
KIND_CNNLSTM = "cnnlstm"
KIND_SVR = "svr"


def stack_inputs(samples: list[SequenceSample]) -> np.ndarray:
    return np.stack([s.input for s in samples]).astype(np.float32)


def stack_targets(samples: list[SequenceSample]) -> np.ndarray:
    return np.stack([s.target for s in samples]).astype(np.float32)


def last_center_values(samples: list[SequenceSample]) -> np.ndarray:
    """Center-cell triple of each sample's last input frame, shape (n, 3)."""
    co = center_offset(samples[0].input.shape[1])
    return np.stack([s.input[-1, co, co, :] for s in samples]).astype(np.float32)


def flattened_channel_features(samples: list[SequenceSample], channel: int) -> np.ndarray:
    """Row-major flattening of the last frame's given channel, shape (n, w*w)."""
    return np.stack(
        [s.input[-1, :, :, channel].reshape(-1) for s in samples]
    ).astype(np.float64)


# -- persistence ----------------------------------------------------------------


class PersistenceModel:
    """Predicts no change: the last observed center triple."""

    kind = KIND_PERSISTENCE

    def predict_samples(self, samples: list[SequenceSample]) -> np.ndarray:
        return last_center_values(samples).astype(np.float64)


def persistence_predict(sample: SequenceSample) -> ChannelTriple:
    co = center_offset(sample.input.shape[1])
    return ChannelTriple.from_array(sample.input[-1, co, co, :])


# -- flattened-window CART baselines ---------------------------------------------


@dataclass
class TreeChannelModel:
    kind = KIND_TREE
    spec: TreeSpec
    window: int
    trees: dict[int, TreeModel] = field(default_factory=dict)

    def predict_samples(self, samples: list[SequenceSample]) -> np.ndarray:
        out = np.full((len(samples), 3), np.nan)
        for ch, tree in sorted(self.trees.items()):
            out[:, ch] = tree.predict(flattened_channel_features(samples, ch))
        return out


@dataclass
class ForestChannelModel:
    kind = KIND_FOREST
    spec: ForestSpec
    window: int
    forests: dict[int, ForestModel] = field(default_factory=dict)

    def predict_samples(self, samples: list[SequenceSample]) -> np.ndarray:
        out = np.full((len(samples), 3), np.nan)
        for ch, forest in sorted(self.forests.items()):
            out[:, ch] = forest.predict(flattened_channel_features(samples, ch))
        return out


def fit_tree_channels(
    samples: list[SequenceSample], spec: TreeSpec = TreeSpec(), channels=(0, 1, 2)
) -> TreeChannelModel:
    if not samples:
        raise EmptyTrainingSet("no training samples")
    w = samples[0].input.shape[1]
    model = TreeChannelModel(spec, w)
    for ch in channels:
        X = flattened_channel_features(samples, ch)
        y = np.array([float(s.target[ch]) for s in samples])
        model.trees[ch] = tree_fit(X, y, spec)
    return model


def fit_forest_channels(
    samples: list[SequenceSample], spec: ForestSpec = ForestSpec(), channels=(0, 1, 2)
) -> ForestChannelModel:
    if not samples:
        raise EmptyTrainingSet("no training samples")
    w = samples[0].input.shape[1]
    model = ForestChannelModel(spec, w)
    for ch in channels:
        X = flattened_channel_features(samples, ch)
        y = np.array([float(s.target[ch]) for s in samples])
        per_channel = ForestSpec(
            tree_count=spec.tree_count,
            max_depth=spec.max_depth,
            min_samples_leaf=spec.min_samples_leaf,
            bootstrap=spec.bootstrap,
            feature_subsample=spec.feature_subsample,
            seed=spec.seed + 7919 * ch,
        )
        model.forests[ch] = forest_fit(X, y, per_channel)
    return model


# -- CNN-LSTM ---------------------------------------------------------------------


@dataclass
class CnnLstmModel:
    kind = KIND_CNNLSTM
    spec: CnnLstmSpec
    params: ParameterSet
    meta: dict = field(default_factory=dict)

    def predict_samples(self, samples: list[SequenceSample]) -> np.ndarray:
        return predict_batch(self.params, self.spec, stack_inputs(samples)).astype(np.float64)

    def predict_one(self, sample_input: np.ndarray) -> ChannelTriple:
        from .cnnlstm import cnnlstm_forward

        return ChannelTriple.from_array(cnnlstm_forward(self.params, self.spec, sample_input))


def fit_cnnlstm(
    train_samples: list[SequenceSample],
    val_samples: list[SequenceSample] | None,
    spec: CnnLstmSpec,
    config: TrainConfig,
    seed: int,
    log=None,
) -> CnnLstmModel:
    if not train_samples:
        raise EmptyTrainingSet("no training samples")
    params, history = train(
        stack_inputs(train_samples),
        stack_targets(train_samples),
        spec,
        config,
        seed,
        val_X=stack_inputs(val_samples) if val_samples else None,
        val_y=stack_targets(val_samples) if val_samples else None,
        log=log,
    )
    meta = {
        "seed": seed,
        "epochs_run": history.epochs_run,
        "best_epoch": history.best_epoch,
        "train_loss": history.train_loss,
        "val_loss": history.val_loss,
    }
    return CnnLstmModel(spec, params, meta)


# -- container IO -------------------------------------------------------------------

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i4": np.dtype("<i4")}


def _write_container(path: Path, kind: str, spec: dict, meta: dict,
                     tensors: list[tuple[str, np.ndarray]]) -> None:
    index = []
    payloads = []
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr)
        code = {"float32": "<f4", "float64": "<f8", "int32": "<i4"}.get(arr.dtype.name)
        if code is None:
            raise ValueError(f"unsupported tensor dtype {arr.dtype} for {name}")
        arr = arr.astype(code, copy=False)
        index.append({"name": name, "shape": list(arr.shape), "dtype": code})
        payloads.append(arr.tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "spec": spec,
        "meta": meta,
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        for chunk in payloads:
            fh.write(chunk)


def _read_container(path: Path):
    raw = Path(path).read_bytes()
    if raw[:4] != MODEL_MAGIC:
        raise FormatViolation(f"bad model magic {raw[:4]!r}")
    if len(raw) < 9 or raw[4] != FORMAT_VERSION:
        raise FormatViolation("unsupported model container version")
    hlen = int.from_bytes(raw[5:9], "little")
    try:
        header = json.loads(raw[9 : 9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatViolation(f"bad model header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatViolation(f"unsupported format_version {header.get('format_version')!r}")
    tensors: dict[str, np.ndarray] = {}
    offset = 9 + hlen
    for entry in header["tensors"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise FormatViolation(f"unknown tensor dtype {entry['dtype']!r}")
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatViolation(f"truncated payload for tensor {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(entry["shape"])
        offset += nbytes
    if offset != len(raw):
        raise FormatViolation(f"{len(raw) - offset} trailing bytes after payload")
    return header, tensors


def _tree_tensors(prefix: str, tree: TreeModel) -> list[tuple[str, np.ndarray]]:
    return [
        (f"{prefix}feature", tree.feature),
        (f"{prefix}threshold", tree.threshold),
        (f"{prefix}left", tree.left),
        (f"{prefix}right", tree.right),
        (f"{prefix}value", tree.value),
    ]


def _tree_from_tensors(prefix: str, spec: TreeSpec, tensors) -> TreeModel:
    return TreeModel(
        spec,
        tensors[f"{prefix}feature"],
        tensors[f"{prefix}threshold"],
        tensors[f"{prefix}left"],
        tensors[f"{prefix}right"],
        tensors[f"{prefix}value"],
    )


def save_model(model, path: Path) -> None:
    path = Path(path)
    if isinstance(model, PersistenceModel):
        _write_container(path, KIND_PERSISTENCE, {}, {}, [])
    elif isinstance(model, TreeChannelModel):
        spec = {
            "max_depth": model.spec.max_depth,
            "min_samples_leaf": model.spec.min_samples_leaf,
            "window": model.window,
            "channels": sorted(model.trees),
        }
        tensors = []
        for ch, tree in sorted(model.trees.items()):
            tensors.extend(_tree_tensors(f"c{ch}/", tree))
        _write_container(path, KIND_TREE, spec, {}, tensors)
    elif isinstance(model, ForestChannelModel):
        spec = {
            "tree_count": model.spec.tree_count,
            "max_depth": model.spec.max_depth,
            "min_samples_leaf": model.spec.min_samples_leaf,
            "bootstrap": model.spec.bootstrap,
            "feature_subsample": model.spec.feature_subsample,
            "seed": model.spec.seed,
            "window": model.window,
            "channels": sorted(model.forests),
        }
        tensors = []
        for ch, forest in sorted(model.forests.items()):
            for k, tree in enumerate(forest.trees):
                tensors.extend(_tree_tensors(f"c{ch}/t{k}/", tree))
        _write_container(path, KIND_FOREST, spec, {}, tensors)
    elif isinstance(model, CnnLstmModel):
        s = model.spec
        spec = {
            "window": s.window, "steps": s.steps, "channels": s.channels,
            "conv_blocks": s.conv_blocks, "convs_per_block": s.convs_per_block,
            "filters": s.filters, "dense_dims": list(s.dense_dims),
            "lstm_hidden": s.lstm_hidden,
        }
        tensors = [(name, t.data) for name, t in sorted(model.params.items())]
        _write_container(path, KIND_CNNLSTM, spec, model.meta, tensors)
    elif isinstance(model, SvrModel):
        spec = {
            "C": model.spec.C, "epsilon": model.spec.epsilon,
            "kernel": model.spec.kernel, "gamma": model.gamma,
            "tol": model.spec.tol, "max_passes": model.spec.max_passes,
        }
        meta = {"dual_objective": model.dual_objective, "iterations": model.iterations}
        tensors = [
            ("support_vectors", model.support_vectors),
            ("coef", model.coef),
            ("bias", np.array([model.bias])),
            ("feature_mean", model.feature_standardizer.mean),
            ("feature_scale", model.feature_standardizer.scale),
            ("label_mean", model.label_standardizer.mean),
            ("label_scale", model.label_standardizer.scale),
        ]
        _write_container(path, KIND_SVR, spec, meta, tensors)
    else:
        raise ValueError(f"cannot save model of type {type(model).__name__}")


def load_model(path: Path, expect: str | None = None):
    header, tensors = _read_container(path)
    kind = header.get("kind")
    if expect is not None and kind != expect:
        raise FormatViolation(f"model kind {kind!r}, expected {expect!r}")
    spec = header.get("spec", {})
    if kind == KIND_PERSISTENCE:
        return PersistenceModel()
    if kind == KIND_TREE:
        tspec = TreeSpec(spec["max_depth"], spec["min_samples_leaf"])
        model = TreeChannelModel(tspec, spec["window"])
        for ch in spec["channels"]:
            model.trees[ch] = _tree_from_tensors(f"c{ch}/", tspec, tensors)
        return model
    if kind == KIND_FOREST:
        fspec = ForestSpec(
            tree_count=spec["tree_count"], max_depth=spec["max_depth"],
            min_samples_leaf=spec["min_samples_leaf"], bootstrap=spec["bootstrap"],
            feature_subsample=spec["feature_subsample"], seed=spec["seed"],
        )
        model = ForestChannelModel(fspec, spec["window"])
        for ch in spec["channels"]:
            trees = []
            k = 0
            while f"c{ch}/t{k}/feature" in tensors:
                trees.append(_tree_from_tensors(f"c{ch}/t{k}/", fspec.tree_spec(), tensors))
                k += 1
            model.forests[ch] = ForestModel(fspec, trees)
        return model
    if kind == KIND_CNNLSTM:
        cspec = CnnLstmSpec(
            window=spec["window"], steps=spec["steps"], channels=spec["channels"],
            conv_blocks=spec["conv_blocks"], convs_per_block=spec["convs_per_block"],
            filters=spec["filters"], dense_dims=tuple(spec["dense_dims"]),
            lstm_hidden=spec["lstm_hidden"],
        )
        params = ParameterSet(
            {name: Tensor(arr.copy(), requires_grad=True) for name, arr in tensors.items()}
        )
        return CnnLstmModel(cspec, params, header.get("meta", {}))
    if kind == KIND_SVR:
        sspec = SvrSpec(
            C=spec["C"], epsilon=spec["epsilon"], kernel=spec["kernel"],
            gamma=spec["gamma"], tol=spec["tol"], max_passes=spec["max_passes"],
        )
        return SvrModel(
            spec=sspec,
            gamma=spec["gamma"],
            support_vectors=tensors["support_vectors"],
            coef=tensors["coef"],
            bias=float(tensors["bias"][0]),
            feature_standardizer=Standardizer(tensors["feature_mean"], tensors["feature_scale"]),
            label_standardizer=Standardizer(tensors["label_mean"], tensors["label_scale"]),
            dual_objective=header.get("meta", {}).get("dual_objective", 0.0),
            iterations=header.get("meta", {}).get("iterations", 0),
        )
    raise FormatViolation(f"unknown model kind {kind!r}")
