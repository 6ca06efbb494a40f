# -*- coding: utf-8 -*-
"""Job

批处理中的一个分割任务：一个输入体数据，一个输出掩膜。
"""

from pathlib import Path
from typing import Final

__all__ = [
    'MASK_SUFFIX',
    'NIFTI_SUFFIXES',
    'Job',
    'JobOutcome',
    'nifti_stem',
]

NIFTI_SUFFIXES: Final[tuple[str, ...]] = ('.nii.gz', '.nii')
MASK_SUFFIX: Final[str] = '_vessels.nii.gz'


def nifti_stem(path: str | Path) -> str:
    """'sub-01_angio.nii.gz' -> 'sub-01_angio'"""
    name = Path(path).name
    for suffix in NIFTI_SUFFIXES:
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(name).stem


class Job:
    """Segmentation job"""

    __slots__ = (
        'input_path',
        'output_path',
        'index',
        'priority',
    )

    def __init__(
        self,
        input_path: str | Path,
        outdir: str | Path,
        *,
        index: int = 0,
        priority: int = 0,
    ):
        """

        :param input_path: 输入体数据 .nii/.nii.gz
        :param outdir: 输出目录，掩膜写入 outdir/<stem>_vessels.nii.gz
        :param index: 任务在批次中的序号
        :param priority: 优先级，越小越先处理
        """
        self.input_path = Path(input_path)
        self.output_path = Path(outdir) / f"{nifti_stem(self.input_path)}{MASK_SUFFIX}"
        self.index = index
        self.priority = priority

    def __repr__(self):
        return f"<Job #{self.index} {self.input_path.name}>"

    def __lt__(self, other: 'Job'):
        return (self.priority, self.index) < (other.priority, other.index)

    def fingerprint(self) -> str:
        return str(self.input_path.resolve())


class JobOutcome:
    __slots__ = ('job', 'ok', 'message', 'elapsed')

    def __init__(self, job: Job, ok: bool, message: str, elapsed: float = 0.0):
        """

        :param job:
        :param ok: 是否成功
        :param message: 成功时为分割摘要，失败时为错误信息
        :param elapsed: 耗时, s
        """
        self.job = job
        self.ok = ok
        self.message = message
        self.elapsed = elapsed

    def __repr__(self):
        return f"<JobOutcome {self.job.input_path.name} {'ok' if self.ok else 'failed'}>"
