"""Human-readable progress lines. They go to stderr; stdout is reserved for JSON results."""
import typer

_quiet = False


def set_quiet(quiet: bool):
    global _quiet
    _quiet = quiet


def banner(title: str):
    if _quiet:
        return
    typer.echo("=" * 60, err=True)
    typer.echo(title, err=True)
    typer.echo("=" * 60, err=True)


def info(message: str):
    if not _quiet:
        typer.echo(message, err=True)


def ok(message: str):
    info(f"✓ {message}")


def warn(message: str):
    # warnings are shown even in quiet mode
    typer.echo(f"⚠ {message}", err=True)


def fail(message: str):
    typer.echo(f"✗ {message}", err=True)
