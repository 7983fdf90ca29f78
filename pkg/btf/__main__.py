from btf.cli import cli

cli(prog_name="btf")
