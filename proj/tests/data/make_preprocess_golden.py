"""Reference output for the preprocess golden test.

Resizes a 64x64 gradient raster to 32x32 with OpenCV's cubic kernel
(a = -0.75, half-pixel centres, replicated border, float input so no
fixed-point rounding), then scales to [0, 1] and standardizes with the
CLIP mean/std. Output: preprocess_golden.json, CHW order.
"""
import json

import cv2
import numpy as np

MEAN = np.array([0.48145466, 0.4578275, 0.40821073], dtype=np.float32)
STD = np.array([0.26862954, 0.26130258, 0.27577711], dtype=np.float32)

y, x = np.mgrid[0:64, 0:64]
raster = np.stack([x * 4, y * 4, (x + y) * 2], axis=-1).astype(np.uint8)
resized = cv2.resize(raster.astype(np.float32), (32, 32), interpolation=cv2.INTER_CUBIC)
tensor = (resized / np.float32(255.0) - MEAN) / STD
chw = np.transpose(tensor, (2, 0, 1)).astype(np.float32)
with open("preprocess_golden.json", "w") as f:
    json.dump({"size": 32, "values": [float(v) for v in chw.ravel()]}, f)
