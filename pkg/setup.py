#!/usr/bin/env python3
"""
Setup script for the TKAN benchmark
"""

import subprocess
import sys
import os
from pathlib import Path

from utils import load_yaml

DATA_DIR = "data/klines"
RESULTS_DIR = "results"


def install_dependencies():
    """Install required dependencies"""
    print("📦 Installing dependencies...")
    try:
        subprocess.check_call(["uv", "sync"])
        print("✅ Dependencies installed successfully!")
        return True
    except (subprocess.CalledProcessError, FileNotFoundError):
        print("❌ Failed to install dependencies (is uv on PATH?)")
        return False


def create_directories(config_path: str = "config.yaml"):
    """Create the kline cache and results directories named in the config"""
    print("📁 Creating directories...")
    config = load_yaml(config_path)
    data_dir = config.get("data", {}).get("data_dir", DATA_DIR)
    results_dir = config.get("benchmark", {}).get("output_dir", RESULTS_DIR)
    os.makedirs(data_dir, exist_ok=True)
    os.makedirs(results_dir, exist_ok=True)
    print(f"✅ Directories created: {data_dir}, {results_dir}")
    return data_dir, results_dir


def check_files():
    """Check if all required files exist"""
    required_files = [
        "cli.py",
        "app.py",
        "benchmark.py",
        "config.yaml",
        "reference_r2.csv",
        "requirements.txt",
    ]

    missing_files = [file for file in required_files if not Path(file).exists()]

    if missing_files:
        print("❌ Missing required files:")
        for file in missing_files:
            print(f"   - {file}")
        return False

    print("✅ All required files found!")
    return True


def main():
    print("🚀 TKAN Benchmark Setup")
    print("=" * 50)

    if not check_files():
        print("\n❌ Setup incomplete. Please ensure all files are present.")
        return 1

    create_directories()

    if "--no-install" not in sys.argv and not install_dependencies():
        return 1

    print("\n🎉 Setup completed successfully!")
    print("\n📋 Next steps:")
    print("1. Fetch data:        python cli.py ingest   (or: python cli.py ingest --synthetic 5000)")
    print("2. Prepare windows:   python cli.py prepare")
    print("3. Run the benchmark: python cli.py benchmark --workers 4")
    print("4. View the report:   python cli.py dashboard")
    return 0


if __name__ == "__main__":
    sys.exit(main())
