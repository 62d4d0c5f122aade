"""
Author: qianye
Date: 2025-07-05 06:46:15
LastEditTime: 2025-10-12 21:04:37
Description:
"""


# coding: utf-8
import os
from pathlib import Path

from PySide6.QtCore import QStandardPaths

# verbose console logging and traceback logging in exceptionHandler
DEBUG = bool(os.environ.get("VCNET_DEBUG"))


VERSION = "0.3.0"
APP_NAME = "VCNet Toolkit"

# model file layout version, bump on any incompatible change of model.json
MODEL_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1

# numeric constants shared by kernels and services
LOG_CLAMP_EPS = 1e-7
ELU_ALPHA = 1.0
SPAN_SUM_TOL = 1e-6
UNIT_RANGE_TOL = 1e-9

# evaluation protocol defaults
DEFAULT_EVAL_FRACTION = 0.25
PAIRWISE_SUBSAMPLE_LIMIT = 2000

# synthetic study checks
SYNTH_MIN_VALIDITY = 0.95
SYNTH_MIN_INCREASING_PAIRS = 2


CONFIG_FOLDER = (
    Path(
        os.environ.get("VCNET_HOME")
        or QStandardPaths.writableLocation(QStandardPaths.StandardLocation.AppDataLocation)
    )
    / APP_NAME
)
# 确保配置目录存在
CONFIG_FOLDER.mkdir(parents=True, exist_ok=True)
