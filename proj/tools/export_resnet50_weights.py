#!/usr/bin/env python3
# Copyright (c) 2026 The fusionbench Authors
# SPDX-License-Identifier: Apache-2.0

"""Export torchvision's ImageNet ResNet-50 trunk to a fusionbench tensor archive.

    python tools/export_resnet50_weights.py resnet50_imagenet.fbt

Writes every convolution and batch-norm tensor (parameters and running
statistics) under its torchvision name. The classification layer (fc.*) and
num_batches_tracked counters are dropped.
"""

import argparse
import json
import os
import struct

import numpy as np

MAGIC = b"fusionbench-tensors-v1\n"


def trunk_state(weights_name):
    import torchvision

    weights = getattr(torchvision.models.ResNet50_Weights, weights_name)
    model = torchvision.models.resnet50(weights=weights)
    out = {}
    for name, tensor in model.state_dict().items():
        if name.startswith("fc.") or name.endswith("num_batches_tracked"):
            continue
        out[name] = tensor.detach().cpu().numpy().astype("<f4", copy=False)
    return out, weights_name


def write_archive(path, tensors, meta):
    index, offset = [], 0
    for name in sorted(tensors):
        index.append({"name": name, "shape": list(tensors[name].shape), "offset": offset})
        offset += tensors[name].size * 4
    header = json.dumps({"meta": meta, "tensors": index}).encode()
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for name in sorted(tensors):
            f.write(np.ascontiguousarray(tensors[name]).tobytes())
    os.replace(tmp, path)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("output", help="destination .fbt file")
    ap.add_argument("--weights", default="IMAGENET1K_V1", help="torchvision ResNet50_Weights member")
    args = ap.parse_args()
    tensors, tag = trunk_state(args.weights)
    write_archive(args.output, tensors, {"source": "torchvision.models.resnet50", "weights": tag})
    total = sum(t.size for t in tensors.values())
    print(f"wrote {len(tensors)} tensors ({total} values) to {args.output}")


if __name__ == "__main__":
    main()
