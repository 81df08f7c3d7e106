from mcgsim.cli import main

main()
