from pb2.cli import cli

cli(prog_name="pb2")
