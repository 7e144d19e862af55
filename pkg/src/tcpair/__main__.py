from tcpair.cli import main

main()
