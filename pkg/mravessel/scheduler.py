# -*- coding: utf-8 -*-
"""Batch scheduler

批量分割：任务队列 -> worker -> 进程池(每个进程处理一个体数据) -> 结果队列 -> process_result。
单个任务失败只记录日志并计数，不中断整个批次。
"""

import asyncio
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from pathlib import Path
from typing import Iterable

from mravessel.libs import PipelineConfig, read_nifti, write_nifti
from mravessel.libs.job import NIFTI_SUFFIXES, Job, JobOutcome
from mravessel.pipeline import Pipeline
from mravessel.utils import args_to_list, get_logger

__all__ = [
    'BatchRunner',
    'BatchSummary',
    'collect_inputs',
    'segment_file',
]


def collect_inputs(inputs: Iterable[str | Path] | str | Path) -> list[Path]:
    """展开输入：文件原样保留，目录按文件名排序取其中的 .nii/.nii.gz (不递归)

    :raise FileNotFoundError: 输入路径不存在
    """
    paths = []
    for item in args_to_list(inputs):
        path = Path(item)
        if path.is_file():
            paths.append(path)
        elif path.is_dir():
            paths.extend(
                sorted(p for p in path.iterdir() if p.is_file() and p.name.endswith(NIFTI_SUFFIXES))
            )
        else:
            raise FileNotFoundError(f"File Not Found: {path}")
    return paths


def segment_file(input_path: Path, output_path: Path, config: PipelineConfig, workers: int = 1) -> str:
    """在子进程中执行：读入、分割、写出，返回单行摘要"""
    vol = read_nifti(input_path)
    result = Pipeline(config, workers=workers, log_level=30).run(vol)
    write_nifti(result.mask, output_path)
    return result.summary()


class BatchSummary:
    __slots__ = ('succeeded', 'failed', 'elapsed', 'outcomes')

    def __init__(self, outcomes: list[JobOutcome], elapsed: float):
        self.outcomes = sorted(outcomes, key=lambda _: _.job.index)
        self.succeeded = sum(1 for _ in outcomes if _.ok)
        self.failed = len(outcomes) - self.succeeded
        self.elapsed = elapsed

    def __repr__(self):
        return f"<BatchSummary succeeded={self.succeeded} failed={self.failed} elapsed={self.elapsed:.2f}s>"

    @property
    def ok(self) -> bool:
        return self.failed == 0


class BatchRunner:
    """Segment many volumes with a bounded pool of worker processes"""

    def __init__(
        self,
        inputs: Iterable[str | Path] | str | Path,
        outdir: str | Path,
        config: PipelineConfig | None = None,
        *,
        concurrency: int = 2,
        workers: int = 1,
        use_processes: bool = True,
        log_level: int = 20,
    ):
        """

        :param inputs: 输入文件或目录
        :param outdir: 输出目录，不存在时创建
        :param config:
        :param concurrency: 同时处理的体数据个数(进程数)
        :param workers: 每个体数据内部的线程数
        :param use_processes: False时使用线程池，便于调试
        :param log_level:
        """
        assert concurrency >= 1, f"Expected concurrency >= 1, got {concurrency}"
        self.inputs = args_to_list(inputs)
        self.outdir = Path(outdir)
        self.config = config or PipelineConfig()
        self.concurrency = concurrency
        self.workers = workers
        self.use_processes = use_processes
        self.logger = get_logger(self.__class__.__name__, log_level=log_level)

        self.job_queue: asyncio.PriorityQueue | None = None
        self.result_queue: asyncio.Queue | None = None
        self.seen_jobs = set()
        self.outcomes: list[JobOutcome] = []
        self.executor: Executor | None = None
        self.running = False

    def __repr__(self):
        return f"<BatchRunner inputs={len(self.inputs)} concurrency={self.concurrency}>"

    def build_jobs(self) -> list[Job]:
        """同一文件只处理一次；文件越大优先级越高"""
        jobs = []
        for path in collect_inputs(self.inputs):
            job = Job(path, self.outdir, index=len(jobs), priority=-path.stat().st_size)
            if (fp := job.fingerprint()) in self.seen_jobs:
                self.logger.debug(f"{job} has been seen")
                continue
            self.seen_jobs.add(fp)
            jobs.append(job)
        return jobs

    def _enqueue_job(self, job: Job):
        self.logger.debug(f"Enqueue: {job}")
        self.job_queue.put_nowait((job.priority, job))

    async def _next_job(self) -> Job:
        _, job = await self.job_queue.get()
        return job

    async def run_job(self, job: Job) -> JobOutcome:
        loop = asyncio.get_running_loop()
        start = time.perf_counter()
        try:
            message = await loop.run_in_executor(
                self.executor,
                segment_file,
                job.input_path,
                job.output_path,
                self.config,
                self.workers,
            )
        except Exception as e:
            return JobOutcome(job, False, f"{e.__class__.__name__}: {e}", time.perf_counter() - start)
        return JobOutcome(job, True, message, time.perf_counter() - start)

    async def start_worker(self):
        while True:
            job = await self._next_job()
            outcome = await self.run_job(job)
            self.result_queue.put_nowait(outcome)
            self.job_queue.task_done()

    async def start_collector(self):
        while True:
            outcome = await self.result_queue.get()
            self.process_result(outcome)
            self.result_queue.task_done()

    def process_result(self, outcome: JobOutcome) -> JobOutcome:
        self.outcomes.append(outcome)
        if outcome.ok:
            self.logger.info(f"{outcome.job.input_path.name} -> {outcome.job.output_path.name} "
                             f"({outcome.elapsed:.1f}s): {outcome.message}")
        else:
            self.logger.error(f"{outcome.job.input_path.name} failed: {outcome.message}")
        return outcome

    async def run(self) -> BatchSummary:
        start = time.perf_counter()
        self.seen_jobs.clear()
        jobs = self.build_jobs()
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.logger.info(f"Start {self.__class__.__name__}: {len(jobs)} jobs, concurrency={self.concurrency}")

        self.job_queue = asyncio.PriorityQueue()
        self.result_queue = asyncio.Queue()
        self.outcomes = []
        for job in jobs:
            self._enqueue_job(job)

        pool_cls = ProcessPoolExecutor if self.use_processes else ThreadPoolExecutor
        self.executor = pool_cls(max_workers=self.concurrency)
        self.running = True
        tasks = [asyncio.create_task(self.start_collector(), name='collector')]
        tasks += [
            asyncio.create_task(self.start_worker(), name=f"worker-{i}")
            for i in range(min(self.concurrency, len(jobs)) or 1)
        ]
        try:
            await self.job_queue.join()
            await self.result_queue.join()
        finally:
            await self.close(tasks)

        summary = BatchSummary(self.outcomes, time.perf_counter() - start)
        self.logger.info(f"{self.__class__.__name__} finished: {summary}")
        return summary

    async def close(self, tasks: list[asyncio.Task]):
        if self.running:
            for task in tasks:
                task.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)
            self.executor.shutdown(wait=True)
            self.executor = None
            self.running = False
            self.logger.debug(f"{self.__class__.__name__} has been closed.")

    def start(self) -> BatchSummary:
        return asyncio.run(self.run())
