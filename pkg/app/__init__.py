# softmine application package
