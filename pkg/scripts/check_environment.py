#!/usr/bin/env python3
"""
Check the solver stack, the host and access to the case repository
"""

import os
import sys

import psutil
import requests

# Try to load environment variables from .env file
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)


def check_solvers():
    """Solve the bundled 2-bus case with both OPF formulations"""
    print("🔍 Testing OPF solvers on cases/case2_lossy.m...")
    try:
        from grid_case import load_case
        from dcopf import DcParams, solve_dcopf
        from acopf import solve_acopf

        case = load_case(os.path.join(ROOT, 'cases', 'case2_lossy.m'))
        dc = solve_dcopf(case, DcParams.nominal(case))
        ac = solve_acopf(case)
        print(f"✅ DC-OPF objective {dc.objective:.6f}, generation {dc.pg.sum():.4f} p.u.")
        print(f"✅ AC-OPF objective {ac.objective:.6f}, generation {ac.pg.sum():.4f} p.u. "
              f"({ac.iterations} iterations)")
        if ac.pg.sum() <= dc.pg.sum():
            print("⚠️  AC generation should exceed DC generation on a lossy line")
        return True
    except Exception as e:
        print(f"❌ Solver check failed: {e}")
        return False


def check_host():
    print("\n🔍 Host resources...")
    memory = psutil.virtual_memory()
    print(f"   Logical cores: {psutil.cpu_count(logical=True)}")
    print(f"   Memory: {memory.available / (1024 ** 3):.1f} GB free of {memory.total / (1024 ** 3):.1f} GB")
    workers = os.getenv('DC2AC_WORKERS')
    if workers and workers.isdigit() and int(workers) > psutil.cpu_count(logical=True):
        print(f"⚠️  DC2AC_WORKERS={workers} exceeds the number of logical cores")
    return True


def check_case_repository():
    """HEAD request against one known case in the configured repository"""
    print("\n🔍 Testing case repository access...")
    from run_config import DEFAULT_CASE_URL
    base = os.getenv('DC2AC_CASE_URL', DEFAULT_CASE_URL).rstrip('/')
    url = f"{base}/pglib_opf_case14_ieee.m"
    try:
        response = requests.head(url, timeout=30, allow_redirects=True)
        if response.status_code == 200:
            print(f"✅ Reached {base}")
            return True
        print(f"❌ Case repository returned {response.status_code} for {url}")
        return False
    except requests.exceptions.RequestException as e:
        print(f"❌ Network error reaching {base}: {e}")
        return False


def main():
    print("🧪 Environment Check")
    print("=" * 40)

    solvers_ok = check_solvers()
    check_host()
    network_ok = check_case_repository()

    print("\n" + "=" * 40)
    if solvers_ok and network_ok:
        print("✅ All checks passed! You're ready to run the pipeline.")
    else:
        print("❌ Some checks failed.")
        if not solvers_ok:
            print("   - Reinstall the numerical stack: pip install -r requirements.txt")
        if not network_ok:
            print("   - fetch-case needs network access; bundled cases still work offline")
    print("\n💡 To run a small end-to-end pipeline: python scripts/run_smoke_test.py")
    return solvers_ok


if __name__ == '__main__':
    sys.exit(0 if main() else 1)
