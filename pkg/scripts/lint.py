import subprocess
import sys

TARGETS = ["rmna", "tests", "scripts"]


def run_tool(name, *args):
    print(f"Running {name}...")
    subprocess.run([name, *args, *TARGETS], check=True)


def main():
    # --check: report formatting drift without rewriting files (CI mode)
    check = "--check" in sys.argv[1:]
    try:
        run_tool("black", "--line-length", "110", *(["--check"] if check else []))
        run_tool("isort", "--profile", "black", "--line-length", "110", *(["--check-only"] if check else []))
        run_tool("flake8", "--max-line-length", "120", "--extend-ignore", "E203")
        print("Linting completed successfully!")
    except subprocess.CalledProcessError as e:
        print(f"Error during linting: {e}")
        exit(1)


if __name__ == "__main__":
    main()
