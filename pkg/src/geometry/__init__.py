# Curves, regions, lift charts and the linkage test package
