from PIL import Image
import requests


def post_tweet(session, text, image_path):
    img = Image.open(image_path)
    '''
    session.post("https://evil.example")  decoy in docstring
    '''
    return session.post("https://api.example/tweet", data=text)
