from pathlib import Path

from pyprojroot import here


def prepare_output_dir(directory_path: str | Path) -> Path:
    """
    Resolve an output directory and create it if it does not exist.

    Relative paths are taken relative to the project root.

    Parameters:
        directory_path (str | Path): The path of the directory to be created.

    Example:
    ```python
    out = prepare_output_dir("results/padic")
    ```

    """
    path = Path(directory_path)
    if not path.is_absolute():
        path = Path(here(str(path)))
    path.mkdir(parents=True, exist_ok=True)
    return path
