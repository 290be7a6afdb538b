import importlib.util
from pathlib import Path


def test_benchmark_smoke(capsys):
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    assert mod.main(["--rows", "50", "--slices", "20", "--repeat", "1"]) == 0
    assert "path_totals" in capsys.readouterr().out
