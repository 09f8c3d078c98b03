#!/usr/bin/env python3
"""
Setup script for the DC2AC pipeline
"""

import os
import sys
import subprocess

REQUIRED_MODULES = ['numpy', 'scipy', 'pandas', 'matplotlib', 'requests', 'dotenv', 'psutil', 'pytest']


def check_python_version():
    """Check if Python version is 3.9+"""
    if sys.version_info < (3, 9):
        print("❌ Python 3.9 or higher is required")
        print(f"   Current version: {sys.version}")
        return False
    print(f"✅ Python version: {sys.version.split()[0]}")
    return True


def install_requirements():
    print("\n📦 Installing required packages...")
    try:
        subprocess.check_call([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"])
        print("✅ Requirements installed successfully")
        return True
    except subprocess.CalledProcessError:
        print("❌ Failed to install requirements")
        return False


def create_env_file():
    """Create .env from config.example if it doesn't exist"""
    if os.path.exists('.env'):
        print("✅ .env file already exists")
        return True
    if not os.path.exists('config.example'):
        print("❌ config.example file not found")
        return False

    print("\n📝 Creating .env file from template...")
    try:
        with open('config.example', 'r') as source, open('.env', 'w') as target:
            target.write(source.read())
        print("✅ .env file created (defaults are fine for the bundled cases)")
        return True
    except OSError as e:
        print(f"❌ Failed to create .env file: {e}")
        return False


def check_settings():
    """Resolve the run configuration so malformed DC2AC_* values show up now"""
    print("\n🔍 Checking DC2AC settings...")
    sys.path.insert(0, os.getcwd())
    try:
        from dotenv import load_dotenv
        load_dotenv()
        from run_config import RunConfig, ConfigError
    except ImportError as e:
        print(f"❌ Could not load the configuration layer: {e}")
        return False

    try:
        config = RunConfig.resolve('setup')
    except ConfigError as e:
        print(f"❌ {e}")
        print("\n💡 Please fix the value in your .env file")
        return False

    for key in ('seed', 'tol', 'ac_tol', 'workers', 'epochs', 'lr'):
        source = config.sources.get(key, 'default')
        print(f"   {key:<8} = {getattr(config, key)} ({source})")
    print("✅ Settings are valid")
    return True


def test_imports():
    print("\n🔍 Testing imports...")
    failed_imports = []
    for module in REQUIRED_MODULES:
        try:
            __import__(module)
            print(f"✅ {module}")
        except ImportError:
            failed_imports.append(module)
            print(f"❌ {module}")

    if failed_imports:
        print(f"\n❌ Failed to import: {', '.join(failed_imports)}")
        print("   Try running: pip install -r requirements.txt")
        return False
    return True


def main():
    print("🚀 DC2AC Setup")
    print("=" * 40)

    if not check_python_version():
        return False
    if not install_requirements():
        return False
    if not test_imports():
        return False
    if not create_env_file():
        return False

    settings_ok = check_settings()

    print("\n" + "=" * 40)
    if settings_ok:
        print("✅ Setup complete! Try: python scripts/run_smoke_test.py")
    else:
        print("⚠️  Setup mostly complete. Please update your .env file and run setup again.")
    print("\n📖 For more information, see docs/PIPELINE_SETUP.md")
    return settings_ok


if __name__ == '__main__':
    success = main()
    sys.exit(0 if success else 1)
