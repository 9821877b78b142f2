from .service import serve_forever

serve_forever()
