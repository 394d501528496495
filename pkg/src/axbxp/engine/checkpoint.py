"""Model checkpoints: a JSON manifest plus one payload file per tensor.

Layout of a checkpoint directory::

    manifest.json          format, version, input_shape, num_classes, layers[]
    layer<i>.weight.int8   raw int8 weights, row-major
    layer<i>.bias.int32    raw little-endian int32 biases
    layer<i>.weight.axbp   AXBP v1 copy of the truncated weights (configured layers only)

Each weighted layer entry records ``kind``, ``params``, ``weight_shape``,
``weight_scale``, ``act_scale``, the payload file names and ``config``
(``null`` for exact layers).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..config import AxBxPConfig
from ..errors import FormatError
from ..tensor import convert, serialize
from .quant import QuantLayer, QuantModel, QuantTensor

FORMAT = "axbxp-model"
VERSION = 1


def save_model(model: QuantModel, path: str | Path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, l in enumerate(model.layers):
        e: dict = {"kind": l.kind, "params": l.params}
        if l.weighted:
            wfile, bfile = f"layer{i}.weight.int8", f"layer{i}.bias.int32"
            (root / wfile).write_bytes(l.weight.values.astype(np.int8).tobytes())
            (root / bfile).write_bytes(l.bias.astype("<i4").tobytes())
            e.update(weight_shape=list(l.weight.shape), weight_scale=l.weight.scale,
                     act_scale=l.act_scale, weight_file=wfile, bias_file=bfile,
                     config=l.config.to_dict() if l.config else None)
            if l.config is not None:
                afile = f"layer{i}.weight.axbp"
                t = convert(l.weight.values, l.config.K, l.config.n_tilde_w, l.config.mode,
                            scale=l.weight.scale)
                (root / afile).write_bytes(serialize(t))
                e["axbp_file"] = afile
        entries.append(e)
    manifest = {"format": FORMAT, "version": VERSION, "input_shape": list(model.input_shape),
                "num_classes": model.num_classes, "layers": entries}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return root


def load_model(path: str | Path) -> QuantModel:
    root = Path(path)
    mpath = root / "manifest.json" if root.is_dir() else root
    root = mpath.parent
    try:
        manifest = json.loads(mpath.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest {mpath}: {exc}") from exc
    if manifest.get("format") != FORMAT or manifest.get("version") != VERSION:
        raise FormatError("not an axbxp-model v1 manifest")
    layers = []
    for e in manifest["layers"]:
        if "weight_file" not in e:
            layers.append(QuantLayer(e["kind"], params=e.get("params", {})))
            continue
        shape = tuple(e["weight_shape"])
        w = np.frombuffer((root / e["weight_file"]).read_bytes(), dtype=np.int8)
        b = np.frombuffer((root / e["bias_file"]).read_bytes(), dtype="<i4")
        if w.size != int(np.prod(shape)) or b.size != shape[0]:
            raise FormatError(f"payload size mismatch for {e['weight_file']}")
        cfg = AxBxPConfig.from_dict(e["config"]) if e.get("config") else None
        layers.append(QuantLayer(e["kind"], QuantTensor(w.astype(np.int64).reshape(shape), e["weight_scale"]),
                                 b.astype(np.int64), e["act_scale"], cfg, e.get("params", {})))
    return QuantModel(layers, tuple(manifest["input_shape"]), manifest["num_classes"])
