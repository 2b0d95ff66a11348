#!/usr/bin/env python3
"""Convert a PyTorch state dict (.pth) to safetensors for `segstyle fetch-weights`.

Usage: pth_to_safetensors.py IN.pth OUT.safetensors

Tensor names are kept as they are (`0.weight`, `sanet4_1.f.weight`, ...).
Everything is stored as float32.
"""
import sys

import torch
from safetensors.torch import save_file


def main():
    src, dst = sys.argv[1:3]
    state = torch.load(src, map_location="cpu")
    if "state_dict" in state:
        state = state["state_dict"]
    tensors = {k: v.detach().float().contiguous() for k, v in state.items() if torch.is_tensor(v)}
    save_file(tensors, dst)
    print(f"{len(tensors)} tensors -> {dst}")


if __name__ == "__main__":
    main()
