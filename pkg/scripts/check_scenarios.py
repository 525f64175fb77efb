#!/usr/bin/env python3
"""Run every built-in scenario and report pass/fail with timings."""

import sys
import os

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import logging
import time

logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(levelname)s] %(message)s")
logger = logging.getLogger(__name__)


def check_scenario(name) -> bool:
    from app.services.scenarios import run_scenario

    logger.info("=== Scenario %s ===", name.value)
    started = time.perf_counter()
    try:
        result = run_scenario(name)
    except Exception as e:
        logger.error("  ✗ %s failed: %s", name.value, e)
        return False
    elapsed = time.perf_counter() - started
    for key, value in result.report.values.items():
        logger.info("  %s = %s", key, value)
    status = "✓ reproduced" if result.report.passed else "✗ NOT reproduced"
    logger.info("  %s in %.2fs", status, elapsed)
    return result.report.passed


def main():
    from app.models.schemas import ScenarioName

    results = {name.value: check_scenario(name) for name in ScenarioName}

    logger.info("=== Summary ===")
    for name, ok in results.items():
        logger.info("  %s: %s", name, "✓" if ok else "✗")
    return 0 if all(results.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
