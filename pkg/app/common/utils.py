"""
Author: qianye
Date: 2025-06-23 08:19:26
LastEditTime: 2025-10-09 22:41:10
Description: 工具函数
"""
import hashlib
import json
import os
from pathlib import Path
from typing import Dict, Iterable, Union

import numpy as np
import psutil


# 随机数流名称，每个用途一个独立的流，保证互不干扰
RNG_STREAMS = ("init", "shuffle", "noise", "perturb", "subsample")


def get_app_path():
    """程序根目录"""
    return Path(__file__).resolve().parent.parent.parent


def getBundledConfigFolder() -> Path:
    """内置实验配置目录"""
    return get_app_path() / "config"


def seedStreams(seed: int, names: Iterable[str] = RNG_STREAMS) -> Dict[str, np.random.Generator]:
    """
    由一个种子派生出多个相互独立的随机数生成器

    :param seed: int, 实验种子
    :param names: 流名称
    :return: dict, 名称 -> numpy Generator
    """
    names = tuple(names)
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.Generator(np.random.PCG64(child)) for name, child in zip(names, children)}


def canonicalJson(obj) -> str:
    """排序键、无多余空格的 JSON，用于哈希"""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256Of(obj) -> str:
    return hashlib.sha256(canonicalJson(obj).encode("utf-8")).hexdigest()


def writeTextAtomic(path: Union[str, Path], text: str):
    """先写临时文件再替换，避免留下半个文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def writeJson(path: Union[str, Path], obj, indent=2):
    writeTextAtomic(path, json.dumps(obj, indent=indent, ensure_ascii=False) + "\n")


def memoryUsageMb() -> float:
    """当前进程常驻内存 (MB)"""
    return psutil.Process().memory_info().rss / (1024 * 1024)


def workerCount() -> int:
    """线程池大小：物理核心数，获取失败时退回逻辑核心数"""
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
