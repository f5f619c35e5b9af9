namespace dexbody {}
