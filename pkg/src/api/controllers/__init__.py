# API controllers package
