# API layer package
