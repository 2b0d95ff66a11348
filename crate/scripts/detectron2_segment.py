#!/usr/bin/env python3
"""Detectron2 adapter for `segstyle --backend-command`.

Usage: detectron2_segment.py [--config NAME] INPUT.png OUTPUT.json

Writes {"instances": [{"label", "score", "rle": {"size": [h, w], "counts": [...]}}]}
with uncompressed column-major run lengths starting with an unset run.
Thresholding and overlap resolution are left to segstyle.
"""
import argparse
import json

import numpy as np


def rle(mask):
    flat = np.asarray(mask, dtype=bool).flatten(order="F")
    counts, current, run = [], False, 0
    for v in flat:
        if v != current:
            counts.append(run)
            run, current = 0, v
        run += 1
    counts.append(run)
    return {"size": list(mask.shape), "counts": counts}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="COCO-InstanceSegmentation/mask_rcnn_R_50_FPN_3x.yaml")
    ap.add_argument("--device", default="cpu")
    ap.add_argument("input")
    ap.add_argument("output")
    args = ap.parse_args()

    from detectron2 import model_zoo
    from detectron2.config import get_cfg
    from detectron2.data import MetadataCatalog
    from detectron2.data.detection_utils import read_image
    from detectron2.engine import DefaultPredictor

    cfg = get_cfg()
    cfg.merge_from_file(model_zoo.get_config_file(args.config))
    cfg.MODEL.WEIGHTS = model_zoo.get_checkpoint_url(args.config)
    cfg.MODEL.DEVICE = args.device
    # segstyle applies its own score threshold.
    cfg.MODEL.ROI_HEADS.SCORE_THRESH_TEST = 0.05
    predictor = DefaultPredictor(cfg)
    names = MetadataCatalog.get(cfg.DATASETS.TRAIN[0]).thing_classes

    inst = predictor(read_image(args.input, format="BGR"))["instances"].to("cpu")
    out = []
    for mask, score, cls in zip(inst.pred_masks.numpy(), inst.scores.tolist(), inst.pred_classes.tolist()):
        out.append({"label": names[cls], "score": float(score), "rle": rle(mask)})
    with open(args.output, "w") as f:
        json.dump({"instances": out}, f)


if __name__ == "__main__":
    main()
