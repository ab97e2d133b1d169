import typer

from swingcert import __version__
from swingcert.config import Settings
from swingcert.loader import load_plugins
from swingcert.logger_config import setup_logging
from swingcert.ui import console

app = typer.Typer(name="swingcert", help="Swingcert CLI")
settings = Settings()
setup_logging(level=settings.log_level)


@app.command()
def version():
    """Prints the installed version."""
    console.print(f"swingcert {__version__}")


def main():
    load_plugins(app)
    app()


if __name__ == "__main__":
    main()
