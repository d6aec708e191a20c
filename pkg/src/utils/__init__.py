# Small helpers: config files, random streams
