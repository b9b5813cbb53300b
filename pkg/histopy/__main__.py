from histopy.pipeline.cli import run

run()
