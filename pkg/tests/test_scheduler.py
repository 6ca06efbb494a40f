import asyncio

import pytest

from conftest import tube_spec
from mravessel.libs import PipelineConfig, read_mask, read_nifti, write_nifti
from mravessel.libs.job import Job, JobOutcome
from mravessel.phantom import generate_phantom
from mravessel.pipeline import segment
from mravessel.scheduler import BatchRunner, BatchSummary, collect_inputs


@pytest.fixture
def input_dir(tmp_path):
    folder = tmp_path / 'in'
    folder.mkdir()
    for i, radius in enumerate((1.0, 1.5)):
        phantom = generate_phantom(tube_spec(radius, dims=(20, 20, 10), noise_sigma=0.05, rng_seed=i))
        write_nifti(phantom.volume, folder / f'sub{i:02d}.nii.gz')
    (folder / 'notes.txt').write_text('not a volume')
    return folder


def test_collect_inputs(input_dir, tmp_path):
    paths = collect_inputs(input_dir)
    assert [_.name for _ in paths] == ['sub00.nii.gz', 'sub01.nii.gz']
    single = input_dir / 'sub01.nii.gz'
    assert collect_inputs([single, input_dir])[0] == single
    with pytest.raises(FileNotFoundError):
        collect_inputs(tmp_path / 'missing')


def test_batch_in_threads(input_dir, tmp_path):
    outdir = tmp_path / 'out'
    runner = BatchRunner(input_dir, outdir, concurrency=2, use_processes=False)
    summary = runner.start()
    assert (summary.succeeded, summary.failed) == (2, 0)
    assert summary.ok
    for name in ('sub00', 'sub01'):
        mask = read_mask(outdir / f'{name}_vessels.nii.gz')
        expected = segment(read_nifti(input_dir / f'{name}.nii.gz'))
        assert (mask.data == expected.data).all()
    assert [_.job.index for _ in summary.outcomes] == [0, 1]


def test_failed_job_does_not_stop_batch(input_dir, tmp_path):
    (input_dir / 'broken.nii').write_bytes(b'\x00' * 64)
    summary = BatchRunner(input_dir, tmp_path / 'out', use_processes=False).start()
    assert (summary.succeeded, summary.failed) == (2, 1)
    assert not summary.ok
    failed = [_ for _ in summary.outcomes if not _.ok]
    assert failed[0].job.input_path.name == 'broken.nii'
    assert not (tmp_path / 'out' / 'broken_vessels.nii.gz').exists()


def test_duplicate_inputs_run_once(input_dir, tmp_path):
    runner = BatchRunner([input_dir / 'sub00.nii.gz', input_dir / 'sub00.nii.gz'], tmp_path / 'out')
    assert len(runner.build_jobs()) == 1


def test_custom_config_reaches_workers(input_dir, tmp_path):
    cfg = PipelineConfig(min_component_mm3=0.0)
    outdir = tmp_path / 'out'
    summary = BatchRunner(input_dir / 'sub00.nii.gz', outdir, cfg, use_processes=False).start()
    assert summary.ok
    assert 'removed=0' in summary.outcomes[0].message


def test_empty_batch(tmp_path):
    folder = tmp_path / 'empty'
    folder.mkdir()
    summary = BatchRunner(folder, tmp_path / 'out', use_processes=False).start()
    assert (summary.succeeded, summary.failed) == (0, 0)
    assert summary.ok


def test_summary_orders_outcomes(tmp_path):
    jobs = [Job(tmp_path / f'{i}.nii', tmp_path, index=i) for i in range(3)]
    outcomes = [JobOutcome(jobs[2], True, '', 0.1), JobOutcome(jobs[0], False, 'x', 0.1), JobOutcome(jobs[1], True, '', 0.1)]
    summary = BatchSummary(outcomes, 1.0)
    assert [_.job.index for _ in summary.outcomes] == [0, 1, 2]
    assert (summary.succeeded, summary.failed) == (2, 1)


def test_runner_can_start_twice(input_dir, tmp_path):
    runner = BatchRunner(input_dir, tmp_path / 'out', use_processes=False)
    first = runner.start()
    second = runner.start()
    assert (first.succeeded, second.succeeded) == (2, 2)
    assert len(second.outcomes) == 2


def test_larger_volumes_run_first(input_dir, tmp_path):
    big = generate_phantom(tube_spec(1.0, dims=(32, 32, 24), noise_sigma=0.05, rng_seed=9))
    write_nifti(big.volume, input_dir / 'sub02.nii.gz')
    runner = BatchRunner(input_dir, tmp_path / 'out')
    jobs = runner.build_jobs()
    assert [_.index for _ in jobs] == [0, 1, 2]
    assert all(_.priority == -_.input_path.stat().st_size for _ in jobs)

    async def drain():
        runner.job_queue = asyncio.PriorityQueue()
        for job in jobs:
            runner._enqueue_job(job)
        return [await runner._next_job() for _ in jobs]

    order = asyncio.run(drain())
    assert order[0].input_path.name == 'sub02.nii.gz'
    sizes = [_.input_path.stat().st_size for _ in order]
    assert sizes == sorted(sizes, reverse=True)
